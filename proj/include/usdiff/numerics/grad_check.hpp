#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "usdiff/numerics/tensor.hpp"

namespace usdiff::nn {

struct GradCheckOptions {
  double fd_eps = 1e-4;
  /// When positive, each input is probed at this many randomly chosen elements
  /// instead of all of them (large parameter tensors).
  std::int64_t max_elements_per_input = -1;
  std::uint64_t seed = 0;
};

/// Compares reverse-mode gradients of a scalar loss against central finite
/// differences. `loss_fn` must read the given leaf tensors (which it captures)
/// and return a single-element tensor. Returns
///   max over probed elements of |analytic - fd| / max(1, |fd|).
/// Throws ShapeError if the loss is not a scalar.
double grad_check(const std::function<Tensor<double>()>& loss_fn,
                  std::vector<Tensor<double>> inputs, const GradCheckOptions& options = {});

inline double grad_check(const std::function<Tensor<double>()>& loss_fn,
                         std::vector<Tensor<double>> inputs, double fd_eps) {
  return grad_check(loss_fn, std::move(inputs), GradCheckOptions{fd_eps, -1, 0});
}

}  // namespace usdiff::nn
