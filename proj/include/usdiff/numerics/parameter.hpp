#pragma once

#include <string>
#include <vector>

#include "usdiff/numerics/tensor.hpp"

namespace usdiff {
class Rng;
}

namespace usdiff::nn {

template <typename T>
struct Parameter {
  std::string name;  // e.g. "unet.down.0.res.0.conv1.weight"
  Tensor<T> tensor;
  bool frozen = false;
};

/// Ordered collection of named parameters. Registration order is the
/// serialization order, so it must not depend on anything but the config.
template <typename T>
class ParamStore {
 public:
  Tensor<T> add(const std::string& name, Shape shape);
  /// Kaiming-uniform with bound 1/sqrt(fan_in).
  Tensor<T> add_fan_in(const std::string& name, Shape shape, std::int64_t fan_in, Rng& rng);
  Tensor<T> add_filled(const std::string& name, Shape shape, T value);

  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }
  const Parameter<T>* find(const std::string& name) const;
  Parameter<T>* find(const std::string& name);

  std::int64_t count() const;
  std::int64_t count_with_prefix(const std::string& prefix) const;
  void set_frozen(bool frozen);
  void set_frozen_prefix(const std::string& prefix, bool frozen);
  void zero_grad();

  /// Same-named parameters, data converted to U. Used for fp64 verification.
  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& p : params_) {
      auto t = p.tensor.template cast<U>();
      out.params().push_back({p.name, t, p.frozen});
    }
    return out;
  }

 private:
  std::vector<Parameter<T>> params_;
};

}  // namespace usdiff::nn
