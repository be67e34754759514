#include "usdiff/data/manifest.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "usdiff/io/hash.hpp"
#include "usdiff/io/png.hpp"

namespace usdiff::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string file_stem(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

}  // namespace

void save_manifest(const Dataset& d, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  json j;
  j["format"] = "usdiff-dataset";
  j["version"] = 1;
  j["image_size"] = d.image_size;
  j["seed"] = d.seed;
  const auto counts = d.class_counts();
  for (int c = 0; c < kNumClasses; ++c) j["counts"][class_name(c)] = counts[c];
  j["samples"] = json::array();
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const auto& s = d.samples[i];
    const auto stem = file_stem(i);
    io::write_png((fs::path(dir) / "images" / (stem + ".png")).string(), image_to_gray8(s.image, d.image_size));
    io::write_png((fs::path(dir) / "masks" / (stem + ".png")).string(), mask_to_gray8(s.mask, d.image_size));
    j["samples"].push_back({{"id", s.id},
                            {"class", class_name(s.class_id)},
                            {"split", split_name(s.split)},
                            {"source", s.source},
                            {"file", stem + ".png"},
                            {"hash", s.content_hash()}});
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  out << j.dump(1) << "\n";
  if (!out) throw std::runtime_error("manifest: cannot write " + dir);
}

Dataset load_manifest(const std::string& dir) {
  const auto path = fs::path(dir) / "manifest.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest: malformed " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "usdiff-dataset") throw std::runtime_error("manifest: not a dataset manifest");
  if (j.value("version", 0) != 1) throw std::runtime_error("manifest: unsupported version");

  Dataset d;
  d.image_size = j.at("image_size").get<int>();
  d.seed = j.at("seed").get<std::uint64_t>();
  const int n = d.image_size;
  for (const auto& e : j.at("samples")) {
    Sample s;
    s.id = e.at("id").get<std::string>();
    s.class_id = parse_class(e.at("class").get<std::string>());
    s.split = parse_split(e.at("split").get<std::string>());
    s.source = e.at("source").get<std::string>();
    const auto file = e.at("file").get<std::string>();
    const auto img = io::read_png((fs::path(dir) / "images" / file).string());
    const auto msk = io::read_png((fs::path(dir) / "masks" / file).string());
    if (img.width != n || img.height != n || msk.width != n || msk.height != n)
      throw std::runtime_error("manifest: " + s.id + ": raster is not " + std::to_string(n) + "x" + std::to_string(n));
    s.image.resize(img.pixels.size());
    s.mask.resize(msk.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      s.image[i] = from_u8(img.pixels[i]);
      s.mask[i] = msk.pixels[i] >= 128 ? 1.0f : 0.0f;
    }
    if (s.content_hash() != e.at("hash").get<std::string>())
      throw std::runtime_error("manifest: " + s.id + ": hash mismatch");
    d.samples.push_back(std::move(s));
  }
  const auto counts = d.class_counts();
  for (int c = 0; c < kNumClasses; ++c) {
    if (j.at("counts").at(class_name(c)).get<int>() != counts[c])
      throw std::runtime_error(std::string("manifest: count mismatch for ") + class_name(c));
  }
  return d;
}

std::string dataset_hash(const Dataset& d, std::span<const std::size_t> idx) {
  std::vector<std::string> hashes;
  hashes.reserve(idx.size());
  for (auto i : idx) hashes.push_back(d.samples.at(i).content_hash());
  std::sort(hashes.begin(), hashes.end());
  io::Sha256 h;
  for (const auto& s : hashes) h.update(s);
  return h.hex();
}

}  // namespace usdiff::data
