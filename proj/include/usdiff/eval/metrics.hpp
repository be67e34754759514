#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace usdiff::eval {

using Scores3 = std::array<double, 3>;

struct AucResult {
  double macro = 0.0;
  Scores3 per_class{};
  /// Classes with at least one positive and one negative. Excluded classes
  /// have per_class = NaN and do not enter the macro mean.
  std::array<bool, 3> included{};
};

/// One-vs-rest ROC AUC from the rank statistic; tied scores count 1/2.
/// Throws std::invalid_argument if N < 2, sizes differ, a label is out of
/// range, or no class has both positives and negatives.
AucResult auc_ovr(std::span<const Scores3> scores, std::span<const int> labels);

/// Peak signal-to-noise ratio for images in [-1, 1] (peak-to-peak 2).
double psnr(std::span<const float> a, std::span<const float> b);

/// Otsu threshold on 8-bit values: returns the largest t maximizing the
/// between-class variance of {<= t} vs {> t}, or -1 when all values are equal.
int otsu_threshold(std::span<const std::uint8_t> values);

/// Hypoechoic region of an image in [-1, 1]: pixels in rows [0, 0.8 S) whose
/// inverted 8-bit value exceeds the Otsu threshold of that region.
std::vector<float> hypoechoic_region(std::span<const float> image, int size);

double iou(std::span<const float> a, std::span<const float> b);

/// IoU of hypoechoic_region(image) against a nonempty binary mask.
/// Throws std::invalid_argument on an empty mask.
double mask_adherence(std::span<const float> image, std::span<const float> mask, int size);

}  // namespace usdiff::eval
