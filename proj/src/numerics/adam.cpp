#include "usdiff/numerics/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace usdiff::nn {

void AdamState::init(const ParamStore<float>& params) {
  m.clear();
  v.clear();
  for (const auto& p : params.params()) {
    m.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0f);
    v.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0f);
  }
  step_count = 0;
}

void adam_step(ParamStore<float>& params, AdamState& state) {
  auto& list = params.params();
  if (state.m.size() != list.size() || state.v.size() != list.size()) {
    throw std::logic_error("adam_step: optimizer state does not match parameter list");
  }
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!list[i].frozen && !list[i].tensor.has_grad()) {
      throw std::logic_error("adam_step: missing gradient for trainable parameter '" +
                             list[i].name + "'");
    }
  }
  const auto t = static_cast<double>(state.step_count + 1);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < list.size(); ++i) {
    auto& p = list[i];
    if (p.frozen) continue;
    auto data = p.tensor.data();
    auto grad = p.tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != data.size()) {
      throw std::logic_error("adam_step: moment shape mismatch for '" + p.name + "'");
    }
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = grad[j];
      const double mj = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      const double vj = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = state.lr * (mj / c1) / (std::sqrt(vj / c2) + state.eps_hat);
      data[j] = static_cast<float>(data[j] - update);
    }
  }
  ++state.step_count;
  params.zero_grad();
}

}  // namespace usdiff::nn
