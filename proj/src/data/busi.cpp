#include "usdiff/data/busi.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <regex>
#include <stdexcept>

#include "usdiff/io/png.hpp"

namespace usdiff::data {

namespace fs = std::filesystem;

namespace {

struct Entry {
  fs::path image;
  std::vector<fs::path> masks;
};

// Pads to square around the centered content. Images replicate the nearest
// edge pixel, masks pad with zero.
std::vector<double> letterbox(const io::Gray8& g, bool edge, int& side) {
  side = std::max(g.width, g.height);
  const int ox = (side - g.width) / 2, oy = (side - g.height) / 2;
  std::vector<double> out(static_cast<std::size_t>(side) * side, 0.0);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      int sx = x - ox, sy = y - oy;
      const bool inside = sx >= 0 && sx < g.width && sy >= 0 && sy < g.height;
      if (!inside && !edge) continue;
      sx = std::clamp(sx, 0, g.width - 1);
      sy = std::clamp(sy, 0, g.height - 1);
      out[static_cast<std::size_t>(y) * side + x] = g.pixels[static_cast<std::size_t>(sy) * g.width + sx];
    }
  return out;
}

// Overlap weights of target cells over source cells along one axis.
std::vector<std::vector<std::pair<int, double>>> area_weights(int from, int to) {
  std::vector<std::vector<std::pair<int, double>>> w(to);
  const double scale = static_cast<double>(from) / to;
  for (int i = 0; i < to; ++i) {
    const double a = i * scale, b = (i + 1) * scale;
    for (int s = static_cast<int>(std::floor(a)); s < from && s < b; ++s) {
      const double overlap = std::min<double>(b, s + 1) - std::max<double>(a, s);
      if (overlap > 0) w[i].push_back({s, overlap / scale});
    }
  }
  return w;
}

}  // namespace

std::vector<double> resize_area(const std::vector<double>& src, int from, int to) {
  if (from == to) return src;
  const auto w = area_weights(from, to);
  std::vector<double> rows(static_cast<std::size_t>(to) * from, 0.0);
  for (int y = 0; y < to; ++y)
    for (auto [s, wt] : w[y])
      for (int x = 0; x < from; ++x) rows[static_cast<std::size_t>(y) * from + x] += wt * src[static_cast<std::size_t>(s) * from + x];
  std::vector<double> out(static_cast<std::size_t>(to) * to, 0.0);
  for (int y = 0; y < to; ++y)
    for (int x = 0; x < to; ++x)
      for (auto [s, wt] : w[x]) out[static_cast<std::size_t>(y) * to + x] += wt * rows[static_cast<std::size_t>(y) * from + s];
  return out;
}

IngestResult ingest_busi(const std::string& dir, int image_size) {
  if (!fs::is_directory(dir)) throw std::runtime_error("ingest: not a directory: " + dir);
  std::vector<std::string> missing;
  for (int c = 0; c < kNumClasses; ++c)
    if (!fs::is_directory(fs::path(dir) / class_name(c))) missing.push_back(class_name(c));
  if (missing.size() == kNumClasses) throw std::runtime_error("ingest: no class folders found in " + dir);
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw std::runtime_error("ingest: missing class folders: " + list);
  }

  IngestResult res;
  res.dataset.image_size = image_size;
  static const std::regex mask_re(R"((.*)_mask(_\d+)?\.png)", std::regex::icase);
  static const std::regex num_re(R"(\((\d+)\))");

  for (int c = 0; c < kNumClasses; ++c) {
    // Group by stem; the map orders entries by (number, stem) for a stable order.
    std::map<std::pair<long, std::string>, Entry> entries;
    std::map<std::string, std::vector<fs::path>> masks;
    for (const auto& f : fs::directory_iterator(fs::path(dir) / class_name(c))) {
      if (!f.is_regular_file()) continue;
      const auto name = f.path().filename().string();
      std::smatch m;
      if (std::regex_match(name, m, mask_re)) {
        masks[m[1].str()].push_back(f.path());
        continue;
      }
      if (f.path().extension() != ".png" && f.path().extension() != ".PNG") continue;
      const auto stem = f.path().stem().string();
      long k = -1;
      if (std::regex_search(stem, m, num_re)) k = std::stol(m[1].str());
      entries[{k, stem}].image = f.path();
    }
    for (auto& [key, e] : entries) {
      const auto& stem = key.second;
      if (auto it = masks.find(stem); it != masks.end()) {
        e.masks = it->second;
        std::sort(e.masks.begin(), e.masks.end());
        masks.erase(it);
      }
      try {
        const auto img = io::read_png(e.image.string());
        io::Gray8 merged{img.width, img.height, std::vector<std::uint8_t>(img.pixels.size(), 0)};
        for (const auto& mp : e.masks) {
          const auto mk = io::read_png(mp.string());
          if (mk.width != img.width || mk.height != img.height) {
            throw std::runtime_error("mask " + mp.filename().string() + " is " + std::to_string(mk.width) + "x" +
                                     std::to_string(mk.height) + ", image is " + std::to_string(img.width) + "x" +
                                     std::to_string(img.height));
          }
          for (std::size_t i = 0; i < merged.pixels.size(); ++i)
            merged.pixels[i] = std::max(merged.pixels[i], mk.pixels[i]);
        }
        if (e.masks.empty() && c != kNormal) throw std::runtime_error("no mask file");

        int side = 0;
        auto ip = letterbox(img, true, side);
        ip = resize_area(ip, side, image_size);
        auto mp = letterbox(merged, false, side);
        mp = resize_area(mp, side, image_size);
        Sample s;
        s.id = std::string(class_name(c)) + "/" + stem;
        s.class_id = c;
        s.source = "ingested";
        s.image.resize(ip.size());
        s.mask.resize(mp.size());
        for (std::size_t i = 0; i < ip.size(); ++i) {
          s.image[i] = static_cast<float>(ip[i] / 127.5 - 1.0);
          s.mask[i] = mp[i] / 255.0 >= 0.5 ? 1.0f : 0.0f;
        }
        quantize(s.image);
        res.dataset.samples.push_back(std::move(s));
      } catch (const std::exception& ex) {
        res.issues.push_back(e.image.string() + ": " + ex.what());
      }
    }
    for (const auto& [stem, paths] : masks)
      for (const auto& p : paths) res.issues.push_back(p.string() + ": mask without image");
  }
  if (res.dataset.samples.empty()) throw std::runtime_error("ingest: no readable images in " + dir);
  return res;
}

void export_busi_layout(const Dataset& d, const std::string& dir) {
  std::array<int, kNumClasses> next{1, 1, 1};
  for (int c = 0; c < kNumClasses; ++c) fs::create_directories(fs::path(dir) / class_name(c));
  for (const auto& s : d.samples) {
    const std::string cls = class_name(s.class_id);
    const auto stem = cls + " (" + std::to_string(next[s.class_id]++) + ")";
    const auto base = fs::path(dir) / cls;
    io::write_png((base / (stem + ".png")).string(), image_to_gray8(s.image, d.image_size));
    io::write_png((base / (stem + "_mask.png")).string(), mask_to_gray8(s.mask, d.image_size));
  }
}

}  // namespace usdiff::data
