#include "usdiff/data/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "usdiff/io/hash.hpp"
#include "usdiff/numerics/rng.hpp"

namespace usdiff::data {

const char* class_name(int class_id) {
  switch (class_id) {
    case kNormal: return "normal";
    case kBenign: return "benign";
    case kMalignant: return "malignant";
  }
  throw std::invalid_argument("class id " + std::to_string(class_id) + " outside [0, 3)");
}

int parse_class(const std::string& name) {
  for (int c = 0; c < kNumClasses; ++c)
    if (name == class_name(c)) return c;
  throw std::invalid_argument("unknown class '" + name + "' (expected normal, benign, malignant)");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + name + "'");
}

std::uint8_t to_u8(float v) {
  const double q = std::round((std::clamp(double(v), -1.0, 1.0) + 1.0) * 127.5);
  return static_cast<std::uint8_t>(q);
}

float from_u8(std::uint8_t q) { return static_cast<float>(q / 127.5 - 1.0); }

void quantize(std::vector<float>& pixels) {
  for (auto& v : pixels) v = from_u8(to_u8(v));
}

io::Gray8 image_to_gray8(std::span<const float> pixels, int size) {
  io::Gray8 g{size, size, std::vector<std::uint8_t>(pixels.size())};
  for (std::size_t i = 0; i < pixels.size(); ++i) g.pixels[i] = to_u8(pixels[i]);
  return g;
}

io::Gray8 mask_to_gray8(std::span<const float> mask, int size) {
  io::Gray8 g{size, size, std::vector<std::uint8_t>(mask.size())};
  for (std::size_t i = 0; i < mask.size(); ++i) g.pixels[i] = mask[i] >= 0.5f ? 255 : 0;
  return g;
}

std::string Sample::content_hash() const {
  io::Sha256 h;
  std::vector<std::uint8_t> bytes(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) bytes[i] = to_u8(image[i]);
  h.update(bytes.data(), bytes.size());
  for (std::size_t i = 0; i < mask.size(); ++i) bytes[i] = mask[i] >= 0.5f ? 1 : 0;
  h.update(bytes.data(), mask.size());
  return h.hex();
}

std::array<int, kNumClasses> Dataset::class_counts() const {
  std::array<int, kNumClasses> c{};
  for (const auto& s : samples) ++c.at(s.class_id);
  return c;
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == s) out.push_back(i);
  return out;
}

std::vector<std::size_t> Dataset::indices_of_class(int class_id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].class_id == class_id) out.push_back(i);
  return out;
}

namespace {

nn::Tensor<float> stack(const Dataset& d, std::span<const std::size_t> idx, bool masks) {
  const auto px = static_cast<std::int64_t>(d.image_size) * d.image_size;
  nn::Tensor<float> out({static_cast<std::int64_t>(idx.size()), 1, d.image_size, d.image_size});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& s = d.samples.at(idx[b]);
    const auto& src = masks ? s.mask : s.image;
    if (static_cast<std::int64_t>(src.size()) != px) {
      throw nn::ShapeError("sample " + s.id + " has " + std::to_string(src.size()) +
                           " pixels, expected " + std::to_string(px));
    }
    std::copy(src.begin(), src.end(), out.ptr() + b * px);
  }
  return out;
}

}  // namespace

nn::Tensor<float> image_batch(const Dataset& d, std::span<const std::size_t> idx) {
  return stack(d, idx, false);
}

nn::Tensor<float> mask_batch(const Dataset& d, std::span<const std::size_t> idx) {
  return stack(d, idx, true);
}

std::vector<int> label_batch(const Dataset& d, std::span<const std::size_t> idx) {
  std::vector<int> out;
  for (auto i : idx) out.push_back(d.samples.at(i).class_id);
  return out;
}

double roughness(std::span<const float> mask, int size) {
  auto at = [&](int y, int x) {
    return y >= 0 && y < size && x >= 0 && x < size && mask[y * size + x] >= 0.5f;
  };
  std::int64_t area = 0, perimeter = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      if (!at(y, x)) continue;
      ++area;
      perimeter += !at(y - 1, x) + !at(y + 1, x) + !at(y, x - 1) + !at(y, x + 1);
    }
  if (area == 0) throw std::invalid_argument("roughness: empty mask");
  return double(perimeter) * perimeter / (4.0 * std::numbers::pi * area);
}

int prompt_to_class(const std::string& prompt) {
  std::vector<int> found;
  std::string word;
  auto flush = [&] {
    for (int c = 0; c < kNumClasses; ++c)
      if (word == class_name(c) && std::find(found.begin(), found.end(), c) == found.end())
        found.push_back(c);
    word.clear();
  };
  for (char ch : prompt) {
    if (std::isalpha(static_cast<unsigned char>(ch))) {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else {
      flush();
    }
  }
  flush();
  if (found.size() != 1) {
    throw std::invalid_argument(
        "ambiguous prompt: expected exactly one of normal/benign/malignant, e.g. "
        "\"Ultrasound image of a normal breast\", \"Ultrasound image of a benign breast\", "
        "\"Ultrasound image of a malignant breast\"");
  }
  return found[0];
}

std::vector<int> largest_remainder(int n, std::span<const double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<int> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> rem;
  int assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = n * weights[i] / total;
    counts[i] = static_cast<int>(std::floor(exact + 1e-9));
    assigned += counts[i];
    rem.push_back({exact - counts[i], i});
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (int k = 0; assigned < n; ++k, ++assigned) ++counts[rem[k % rem.size()].second];
  return counts;
}

void assign_splits(Dataset& d, SplitFractions f, std::uint64_t seed) {
  const double fr[3] = {f.train, f.val, f.test};
  if (std::abs(fr[0] + fr[1] + fr[2] - 1.0) > 1e-9 || fr[0] < 0 || fr[1] < 0 || fr[2] < 0) {
    throw std::invalid_argument("split: fractions must be non-negative and sum to 1");
  }
  const int used = (fr[0] > 0) + (fr[1] > 0) + (fr[2] > 0);
  const Split order[3] = {Split::train, Split::val, Split::test};
  for (int c = 0; c < kNumClasses; ++c) {
    auto idx = d.indices_of_class(c);
    if (idx.empty()) continue;
    if (static_cast<int>(idx.size()) < used) {
      throw std::invalid_argument(std::string("split: class ") + class_name(c) + " has " +
                                  std::to_string(idx.size()) + " samples, fewer than " +
                                  std::to_string(used) + " splits");
    }
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(c)));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const auto counts = largest_remainder(static_cast<int>(idx.size()), fr);
    std::size_t k = 0;
    for (int s = 0; s < 3; ++s)
      for (int j = 0; j < counts[s]; ++j) d.samples[idx[k++]].split = order[s];
  }
}

}  // namespace usdiff::data
