#include "usdiff/numerics/parameter.hpp"

#include <cmath>

#include "usdiff/numerics/rng.hpp"

namespace usdiff::nn {

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& name, Shape shape) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Tensor<T> t(std::move(shape), true);
  params_.push_back({name, t, false});
  return t;
}

template <typename T>
Tensor<T> ParamStore<T>::add_fan_in(const std::string& name, Shape shape, std::int64_t fan_in,
                                    Rng& rng) {
  auto t = add(name, std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
Tensor<T> ParamStore<T>::add_filled(const std::string& name, Shape shape, T value) {
  auto t = add(name, std::move(shape));
  std::fill(t.data().begin(), t.data().end(), value);
  return t;
}

template <typename T>
const Parameter<T>* ParamStore<T>::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

template <typename T>
Parameter<T>* ParamStore<T>::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

template <typename T>
std::int64_t ParamStore<T>::count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
std::int64_t ParamStore<T>::count_with_prefix(const std::string& prefix) const {
  std::int64_t n = 0;
  for (const auto& p : params_)
    if (p.name.starts_with(prefix)) n += p.tensor.numel();
  return n;
}

template <typename T>
void ParamStore<T>::set_frozen(bool frozen) {
  for (auto& p : params_) {
    p.frozen = frozen;
    p.tensor.set_requires_grad(!frozen);
  }
}

template <typename T>
void ParamStore<T>::set_frozen_prefix(const std::string& prefix, bool frozen) {
  for (auto& p : params_) {
    if (!p.name.starts_with(prefix)) continue;
    p.frozen = frozen;
    p.tensor.set_requires_grad(!frozen);
  }
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace usdiff::nn
