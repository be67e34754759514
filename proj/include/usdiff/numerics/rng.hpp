#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "usdiff/numerics/tensor.hpp"

namespace usdiff {

/// Portable seeded generator. The bit stream is std::mt19937_64, whose output
/// sequence is fixed by the C++ standard. Uniform doubles take the top 53 bits;
/// normals use the Box-Muller cosine branch (one normal per two uniforms).
/// Distribution objects from <random> are deliberately not used because their
/// algorithms vary between standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

  template <typename T>
  nn::Tensor<T> normal_tensor(nn::Shape shape) {
    nn::Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(normal());
    return t;
  }

  std::string serialize() const;
  void deserialize(const std::string& state);

  /// Derives an independent stream seed, e.g. one per dataset item.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
};

}  // namespace usdiff
