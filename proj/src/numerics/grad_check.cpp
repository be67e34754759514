#include "usdiff/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "usdiff/numerics/rng.hpp"

namespace usdiff::nn {

double grad_check(const std::function<Tensor<double>()>& loss_fn,
                  std::vector<Tensor<double>> inputs, const GradCheckOptions& options) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  {
    auto loss = loss_fn();
    if (loss.numel() != 1) {
      throw ShapeError("grad_check: loss must be a scalar, got shape " + to_string(loss.shape()));
    }
    loss.backward();
  }
  auto eval = [&] {
    NoGradGuard guard;
    return loss_fn().item();
  };

  Rng rng(options.seed);
  double worst = 0.0;
  for (auto& in : inputs) {
    std::vector<double> analytic(static_cast<std::size_t>(in.numel()), 0.0);
    if (in.has_grad()) std::copy(in.grad().begin(), in.grad().end(), analytic.begin());

    std::vector<std::int64_t> probe(static_cast<std::size_t>(in.numel()));
    std::iota(probe.begin(), probe.end(), 0);
    if (options.max_elements_per_input > 0 &&
        options.max_elements_per_input < static_cast<std::int64_t>(probe.size())) {
      // partial Fisher-Yates with the portable generator
      for (std::int64_t i = 0; i < options.max_elements_per_input; ++i) {
        const auto j = i + static_cast<std::int64_t>(rng.below(probe.size() - i));
        std::swap(probe[i], probe[j]);
      }
      probe.resize(static_cast<std::size_t>(options.max_elements_per_input));
    }

    auto data = in.data();
    for (auto idx : probe) {
      const double saved = data[idx];
      data[idx] = saved + options.fd_eps;
      const double plus = eval();
      data[idx] = saved - options.fd_eps;
      const double minus = eval();
      data[idx] = saved;
      const double fd = (plus - minus) / (2.0 * options.fd_eps);
      const double err = std::abs(analytic[idx] - fd) / std::max(1.0, std::abs(fd));
      worst = std::max(worst, err);
    }
    in.zero_grad();
  }
  return worst;
}

}  // namespace usdiff::nn
