#pragma once

#include <cstdint>
#include <vector>

#include "usdiff/numerics/parameter.hpp"

namespace usdiff::nn {

struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::int64_t step_count = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;

  /// Allocates zeroed moments matching the store's parameters.
  void init(const ParamStore<float>& params);
};

/// One bias-corrected Adam update over every non-frozen parameter, then
/// clears all gradients. Frozen parameters are never written.
/// Throws std::logic_error if a trainable parameter has no gradient.
void adam_step(ParamStore<float>& params, AdamState& state);

}  // namespace usdiff::nn
