#include "usdiff/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "usdiff/data/dataset.hpp"

namespace usdiff::eval {

AucResult auc_ovr(std::span<const Scores3> scores, std::span<const int> labels) {
  const std::size_t n = scores.size();
  if (n != labels.size()) throw std::invalid_argument("auc: scores and labels differ in length");
  if (n < 2) throw std::invalid_argument("auc: need at least 2 samples");
  for (int l : labels)
    if (l < 0 || l > 2) throw std::invalid_argument("auc: label out of range");

  AucResult r;
  double sum = 0;
  int used = 0;
  std::vector<std::size_t> order(n);
  std::vector<double> rank(n);
  for (int c = 0; c < 3; ++c) {
    const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), c));
    const auto neg = n - pos;
    if (pos == 0 || neg == 0) {
      r.per_class[c] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a][c] < scores[b][c]; });
    // Average 1-based ranks over runs of equal scores.
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && scores[order[j + 1]][c] == scores[order[i]][c]) ++j;
      const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
      for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
      i = j + 1;
    }
    double rank_sum = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] == c) rank_sum += rank[i];
    const double u = rank_sum - static_cast<double>(pos) * static_cast<double>(pos + 1) / 2.0;
    r.per_class[c] = u / (static_cast<double>(pos) * static_cast<double>(neg));
    r.included[c] = true;
    sum += r.per_class[c];
    ++used;
  }
  if (used == 0) throw std::invalid_argument("auc: all samples belong to one class");
  r.macro = sum / used;
  return r;
}

double psnr(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("psnr: size mismatch");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(4.0 / mse);
}

int otsu_threshold(std::span<const std::uint8_t> values) {
  std::array<double, 256> hist{};
  for (auto v : values) hist[v] += 1;
  const double total = static_cast<double>(values.size());
  double sum_all = 0;
  for (int i = 0; i < 256; ++i) sum_all += i * hist[i];
  double w0 = 0, sum0 = 0, best = 0;
  int best_t = -1;
  for (int t = 0; t < 255; ++t) {
    w0 += hist[t];
    sum0 += t * hist[t];
    const double w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between >= best && between > 0) {
      best = between;
      best_t = t;
    }
  }
  return best_t;
}

std::vector<float> hypoechoic_region(std::span<const float> image, int size) {
  if (image.size() != static_cast<std::size_t>(size) * size) throw std::invalid_argument("hypoechoic_region: bad size");
  const int rows = static_cast<int>(std::ceil(0.8 * size));
  std::vector<std::uint8_t> inv(static_cast<std::size_t>(rows) * size);
  for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = data::to_u8(-image[i]);
  const int t = otsu_threshold(inv);
  std::vector<float> region(image.size(), 0.0f);
  if (t < 0) return region;
  for (std::size_t i = 0; i < inv.size(); ++i) region[i] = inv[i] > t ? 1.0f : 0.0f;
  return region;
}

double iou(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw std::invalid_argument("iou: size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] >= 0.5f, y = b[i] >= 0.5f;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double mask_adherence(std::span<const float> image, std::span<const float> mask, int size) {
  if (std::none_of(mask.begin(), mask.end(), [](float m) { return m >= 0.5f; }))
    throw std::invalid_argument("mask_adherence: empty mask");
  return iou(hypoechoic_region(image, size), mask);
}

}  // namespace usdiff::eval
