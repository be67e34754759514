#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "usdiff/io/png.hpp"
#include "usdiff/numerics/tensor.hpp"

namespace usdiff::data {

inline constexpr int kNumClasses = 3;
inline constexpr int kNormal = 0;
inline constexpr int kBenign = 1;
inline constexpr int kMalignant = 2;

const char* class_name(int class_id);
/// Throws std::invalid_argument for anything but normal/benign/malignant.
int parse_class(const std::string& name);

enum class Split { train, val, test };
const char* split_name(Split s);
Split parse_split(const std::string& name);

/// One grayscale image with its class and lesion mask. Pixels are row-major,
/// image values in [-1, 1] on the 8-bit grid, mask values exactly 0 or 1.
struct Sample {
  std::string id;
  int class_id = kNormal;
  std::vector<float> image;
  std::vector<float> mask;
  std::string source = "synthetic";  // or "ingested", "generated"
  Split split = Split::train;

  /// SHA-256 over the 8-bit image and mask rasters.
  std::string content_hash() const;
};

struct Dataset {
  int image_size = 64;
  std::uint64_t seed = 0;
  std::vector<Sample> samples;

  std::array<int, kNumClasses> class_counts() const;
  std::vector<std::size_t> indices(Split s) const;
  std::vector<std::size_t> indices_of_class(int class_id) const;
};

// 8-bit <-> [-1, 1] mapping: v = q / 127.5 - 1.
std::uint8_t to_u8(float v);
float from_u8(std::uint8_t q);
/// Snaps values to the nearest 8-bit grid value.
void quantize(std::vector<float>& pixels);
io::Gray8 image_to_gray8(std::span<const float> pixels, int size);
io::Gray8 mask_to_gray8(std::span<const float> mask, int size);

/// [N, 1, S, S] batches of images or masks for the given sample indices.
nn::Tensor<float> image_batch(const Dataset& d, std::span<const std::size_t> idx);
nn::Tensor<float> mask_batch(const Dataset& d, std::span<const std::size_t> idx);
std::vector<int> label_batch(const Dataset& d, std::span<const std::size_t> idx);

/// perimeter^2 / (4 pi area), perimeter counted as the number of pixel edges
/// between mask and non-mask (image border counts as non-mask).
double roughness(std::span<const float> mask, int size);

/// Case-insensitive match of exactly one of normal/benign/malignant as a word.
/// Throws std::invalid_argument("ambiguous prompt ...") otherwise.
int prompt_to_class(const std::string& prompt);

struct SplitFractions {
  double train = 0.8, val = 0.1, test = 0.1;
};

/// Stratified per class, deterministic per seed. Per-class counts use largest
/// remainder on n_class * fraction.
void assign_splits(Dataset& d, SplitFractions f, std::uint64_t seed);

/// Integer counts summing to n, proportional to weights (largest remainder,
/// ties to the lower index).
std::vector<int> largest_remainder(int n, std::span<const double> weights);

}  // namespace usdiff::data
