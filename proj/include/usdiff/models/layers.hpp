#pragma once

#include <stdexcept>
#include <string>

#include "usdiff/numerics/ops.hpp"
#include "usdiff/numerics/parameter.hpp"
#include "usdiff/numerics/rng.hpp"

namespace usdiff::models {

/// A stored tensor is missing or has a shape the architecture does not expect.
class BlobMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Init { fan_in, zeros, ones };

/// Registers parameters under a dotted name prefix. With an Rng it creates and
/// initializes them; without one it binds to tensors already in the store
/// (loaded from a checkpoint) and validates their shapes.
template <typename T>
class Builder {
 public:
  Builder(nn::ParamStore<T>& store, Rng& rng) : store_(&store), rng_(&rng) {}
  explicit Builder(nn::ParamStore<T>& store) : store_(&store) {}

  Builder scope(const std::string& name) const {
    Builder b = *this;
    b.prefix_ = prefix_ + name + ".";
    return b;
  }
  const std::string& prefix() const { return prefix_; }

  nn::Tensor<T> param(const std::string& name, nn::Shape shape, Init init,
                      std::int64_t fan_in = 1) const {
    const auto full = prefix_ + name;
    if (!rng_) {
      auto* p = store_->find(full);
      if (!p) throw BlobMismatchError("missing blob '" + full + "'");
      if (p->tensor.shape() != shape) {
        throw BlobMismatchError("blob '" + full + "' has shape " + nn::to_string(p->tensor.shape()) +
                                ", expected " + nn::to_string(shape));
      }
      return p->tensor;
    }
    switch (init) {
      case Init::fan_in: return store_->add_fan_in(full, std::move(shape), fan_in, *rng_);
      case Init::zeros: return store_->add_filled(full, std::move(shape), T(0));
      case Init::ones: return store_->add_filled(full, std::move(shape), T(1));
    }
    throw std::logic_error("unreachable");
  }

 private:
  nn::ParamStore<T>* store_;
  Rng* rng_ = nullptr;
  std::string prefix_;
};

template <typename T>
struct Conv2d {
  nn::Tensor<T> weight, bias;
  int stride = 1, pad = 1;

  Conv2d() = default;
  Conv2d(const Builder<T>& b, std::int64_t cin, std::int64_t cout, int kernel, int stride_ = 1,
         bool zero_init = false)
      : stride(stride_), pad(kernel / 2) {
    weight = b.param("weight", {cout, cin, kernel, kernel}, zero_init ? Init::zeros : Init::fan_in,
                     cin * kernel * kernel);
    bias = b.param("bias", {cout}, Init::zeros);
  }
  nn::Tensor<T> operator()(const nn::Tensor<T>& x) const {
    return nn::conv2d(x, weight, bias, stride, pad);
  }
};

template <typename T>
struct Linear {
  nn::Tensor<T> weight, bias;  // weight [in, out]

  Linear() = default;
  Linear(const Builder<T>& b, std::int64_t in, std::int64_t out) {
    weight = b.param("weight", {in, out}, Init::fan_in, in);
    bias = b.param("bias", {out}, Init::zeros);
  }
  nn::Tensor<T> operator()(const nn::Tensor<T>& x) const { return nn::linear(x, weight, bias); }
};

template <typename T>
struct GroupNorm {
  nn::Tensor<T> gamma, beta;
  int groups = 8;

  GroupNorm() = default;
  GroupNorm(const Builder<T>& b, std::int64_t channels, int groups_ = 8) : groups(groups_) {
    gamma = b.param("gamma", {channels}, Init::ones);
    beta = b.param("beta", {channels}, Init::zeros);
  }
  nn::Tensor<T> operator()(const nn::Tensor<T>& x) const {
    return nn::group_norm(x, groups, gamma, beta);
  }
};

}  // namespace usdiff::models
