#include "usdiff/data/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "usdiff/numerics/rng.hpp"

namespace usdiff::data {

namespace {

constexpr double kPi = std::numbers::pi;

using Field = std::vector<double>;

Field box_blur(const Field& f, int size) {
  Field out(f.size());
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double acc = 0;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= size || xx < 0 || xx >= size) continue;
          acc += f[yy * size + xx];
          ++n;
        }
      out[y * size + x] = acc / n;
    }
  return out;
}

// Smooth tissue boundary: depth fraction as a function of x.
struct Boundary {
  double base, amp, freq, phase;
  double at(double xf) const { return base + amp * std::sin(2 * kPi * freq * xf + phase); }
};

Boundary random_boundary(Rng& rng, double lo, double hi, double amp) {
  return {rng.uniform(lo, hi), rng.uniform(0.3, 1.0) * amp, rng.uniform(0.5, 1.5),
          rng.uniform(0, 2 * kPi)};
}

bool in_polygon(const std::vector<std::array<double, 2>>& poly, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a[1] > y) != (b[1] > y) && x < (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0]) {
      inside = !inside;
    }
  }
  return inside;
}

// Lesion support at pixel centers. Returns false if the shape fell outside
// the allowed region (caller redraws).
bool draw_lesion(int class_id, Rng& rng, int size, double top, Field& mask) {
  const double s = size / 64.0;
  std::fill(mask.begin(), mask.end(), 0.0);
  const double cx = rng.uniform(0.25, 0.75) * size;
  if (class_id == kBenign) {
    // Round, smooth, often wider than tall.
    const double a = rng.uniform(5.0, 11.0) * s;
    const double b = a * rng.uniform(0.55, 1.0);
    const double th = rng.uniform(-0.35, 0.35);
    const double cy = rng.uniform(top + b + 1, 0.8 * size - b - 1);
    if (!(cy > top)) return false;
    const double c = std::cos(th), sn = std::sin(th);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const double u = (c * dx + sn * dy) / a, v = (-sn * dx + c * dy) / b;
        if (u * u + v * v <= 1.0) mask[y * size + x] = 1.0;
      }
  } else {
    // Spiculated star: alternating outer/inner radii with radial jitter.
    const int n = 8 + static_cast<int>(rng.below(9));
    const double r = rng.uniform(7.0, 12.0) * s;
    const double inner = rng.uniform(0.45, 0.65);
    const double rot = rng.uniform(0, 2 * kPi);
    const double cy = rng.uniform(top + r + 1, 0.8 * size - r - 1);
    if (!(cy > top)) return false;
    std::vector<std::array<double, 2>> poly;
    for (int i = 0; i < n; ++i) {
      const double ang = rot + 2 * kPi * (i + rng.uniform(-0.2, 0.2)) / n;
      const double rad = r * (i % 2 == 0 ? 1.0 : inner) * (1.0 + rng.uniform(-0.3, 0.3));
      poly.push_back({cx + rad * std::cos(ang), cy + rad * std::sin(ang)});
    }
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        if (in_polygon(poly, x + 0.5, y + 0.5)) mask[y * size + x] = 1.0;
  }
  double area = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      if (mask[y * size + x] == 0.0) continue;
      if (y >= 0.8 * size) return false;
      area += 1;
    }
  return area >= 12;
}

}  // namespace

Sample make_phantom(int class_id, std::uint64_t seed, const PhantomOptions& opt) {
  class_name(class_id);  // validates
  const int size = opt.image_size;
  if (size < 16) throw std::invalid_argument("phantom: image_size must be >= 16");
  Rng rng(seed);

  // Tissue strata (depth fractions): skin, subcutaneous fat, gland, muscle,
  // then the attenuated far field.
  const Boundary skin = random_boundary(rng, 0.05, 0.08, 0.01);
  const Boundary fat = random_boundary(rng, 0.22, 0.32, 0.04);
  const Boundary gland = random_boundary(rng, 0.50, 0.60, 0.05);
  const Boundary muscle = random_boundary(rng, 0.82, 0.88, 0.02);
  const double e_fat = rng.uniform(0.6, 0.75);
  const double e_gland = rng.uniform(0.75, 0.95);
  const double e_muscle = rng.uniform(0.55, 0.7);
  const double stripe_freq = rng.uniform(10, 16), stripe_phase = rng.uniform(0, 2 * kPi);
  const double atten = rng.uniform(0.15, 0.35);  // residual after time-gain compensation

  Field echo(size * size);
  Field mask(size * size, 0.0);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double xf = (x + 0.5) / size, yf = (y + 0.5) / size;
      double e;
      if (yf < skin.at(xf)) {
        e = 1.0;
      } else if (yf < fat.at(xf)) {
        e = e_fat;
      } else if (yf < gland.at(xf)) {
        e = e_gland;
      } else if (yf < muscle.at(xf)) {
        e = e_muscle * (1.0 + 0.2 * std::sin(stripe_freq * 2 * kPi * yf + stripe_phase));
      } else {
        e = 0.35;
      }
      echo[y * size + x] = e * std::exp(-atten * yf);
    }

  if (class_id != kNormal) {
    const double top = std::max(fat.base, 0.2) * size;
    bool ok = false;
    for (int attempt = 0; attempt < 64 && !ok; ++attempt) ok = draw_lesion(class_id, rng, size, top, mask);
    if (!ok) throw std::runtime_error("phantom: could not place lesion");
    const Field soft = box_blur(box_blur(mask, size), size);
    const double depth = 0.92;
    // Cysts enhance the tissue behind them; irregular masses shadow it.
    const double posterior = class_id == kBenign ? 1.35 : 0.7;
    for (int x = 0; x < size; ++x) {
      int bottom = -1;
      for (int y = 0; y < size; ++y)
        if (mask[y * size + x] > 0) bottom = y;
      for (int y = 0; y < size; ++y) {
        auto& e = echo[y * size + x];
        e *= 1.0 - depth * soft[y * size + x];
        if (bottom >= 0 && y > bottom) {
          const double fade = std::exp(-(y - bottom) / (0.25 * size));
          e *= 1.0 + (posterior - 1.0) * fade;
        }
      }
    }
  }

  // Fully developed speckle: Rayleigh amplitude scaled by echogenicity. Each
  // pixel of the downsampled frame averages several resolution cells.
  constexpr int kCells = 4;
  Field amp(size * size);
  for (std::size_t i = 0; i < amp.size(); ++i) {
    double r = 0;
    for (int c = 0; c < kCells; ++c) r += std::sqrt(-2.0 * std::log(1.0 - rng.uniform()));
    amp[i] = echo[i] * r / kCells;
  }
  amp = box_blur(amp, size);
  double lo = 1e300, hi = -1e300;
  for (auto& v : amp) {
    v = std::log1p(30.0 * v);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  Sample s;
  s.class_id = class_id;
  s.image.resize(amp.size());
  for (std::size_t i = 0; i < amp.size(); ++i) {
    s.image[i] = static_cast<float>(hi > lo ? 2.0 * (amp[i] - lo) / (hi - lo) - 1.0 : 0.0);
  }

  if (rng.uniform() < opt.artifact_rate) {
    // Caliper marks: short bright segments, sometimes dashed.
    const int segments = 1 + static_cast<int>(rng.below(2));
    for (int k = 0; k < segments; ++k) {
      const bool horizontal = rng.uniform() < 0.5;
      const int len = 8 + static_cast<int>(rng.below(13));
      const bool dashed = rng.uniform() < 0.5;
      const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size - len)));
      const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size)));
      for (int i = 0; i < len; ++i) {
        if (dashed && (i / 2) % 2 == 1) continue;
        const int x = horizontal ? x0 + i : y0, y = horizontal ? y0 : x0 + i;
        s.image[y * size + x] = 1.0f;
      }
    }
  }
  quantize(s.image);
  s.mask.assign(mask.begin(), mask.end());
  return s;
}

Dataset synth_generate(int n, std::array<double, 3> mix, std::uint64_t seed,
                       const PhantomOptions& opt) {
  if (n < 1) throw std::invalid_argument("synth: n must be >= 1");
  double total = 0;
  for (double m : mix) {
    if (m < 0) throw std::invalid_argument("synth: class mix entries must be >= 0");
    total += m;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("synth: class mix must sum to 1");
  const auto counts = largest_remainder(n, mix);
  std::vector<int> classes;
  for (int c = 0; c < kNumClasses; ++c) classes.insert(classes.end(), counts[c], c);
  Rng order(Rng::derive(seed, 0));
  for (std::size_t i = classes.size(); i > 1; --i) std::swap(classes[i - 1], classes[order.below(i)]);

  Dataset d;
  d.image_size = opt.image_size;
  d.seed = seed;
  d.samples.resize(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    auto s = make_phantom(classes[i], Rng::derive(seed, static_cast<std::uint64_t>(i) + 1), opt);
    char id[48];
    std::snprintf(id, sizeof id, "synth-%llu-%04d", static_cast<unsigned long long>(seed), i);
    s.id = id;
    d.samples[i] = std::move(s);
  }
  return d;
}

}  // namespace usdiff::data
