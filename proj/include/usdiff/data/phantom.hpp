#pragma once

#include <array>
#include <cstdint>

#include "usdiff/data/dataset.hpp"

namespace usdiff::data {

/// BUSI class proportions: 133 normal, 437 benign, 210 malignant of 780.
inline constexpr std::array<double, 3> kBusiMix{133.0 / 780, 437.0 / 780, 210.0 / 780};

struct PhantomOptions {
  int image_size = 64;
  double artifact_rate = 0.1;  // share of images with bright measurement marks
};

/// One procedural breast-ultrasound phantom of the given class, fully
/// determined by `seed`.
Sample make_phantom(int class_id, std::uint64_t seed, const PhantomOptions& opt = {});

/// n phantoms with class counts from `mix` (largest remainder), class order
/// shuffled by `seed`, sample i seeded by Rng::derive(seed, i + 1). All splits
/// are train.
Dataset synth_generate(int n, std::array<double, 3> mix = kBusiMix, std::uint64_t seed = 0,
                       const PhantomOptions& opt = {});

}  // namespace usdiff::data
