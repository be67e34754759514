#pragma once

#include <span>
#include <vector>

#include "usdiff/models/unet.hpp"

namespace usdiff::models {

/// ControlNet-style branch: a trainable copy of the U-Net encoder fed with
/// mask features, fused into the frozen base decoder through 1x1 convolutions
/// that start at exactly zero. Parameters live under "control.".
template <typename T>
class ControlBranch {
 public:
  ControlBranch() = default;
  ControlBranch(const UNetConfig& cfg, int image_size, const Builder<T>& b);

  /// Zero-conv outputs: one residual per base skip, then one for the bottleneck.
  std::vector<nn::Tensor<T>> residuals(const nn::Tensor<T>& z, std::span<const int> t,
                                       std::span<const int> class_ids,
                                       const nn::Tensor<T>& mask) const;
  int image_size() const { return image_size_; }

 private:
  UNetConfig cfg_;
  int image_size_ = 64;
  std::vector<Conv2d<T>> hint_;
  UNetEncoder<T> encoder_;
  std::vector<Conv2d<T>> zero_;
};

/// Creates the "control." parameters in `store`: encoder weights copied
/// bit-exactly from the "unet." entries, fresh hint encoder, zero convs.
/// Every "unet." parameter is marked frozen. Throws BlobMismatchError if the
/// base U-Net is incomplete.
template <typename T>
ControlBranch<T> graft(const UNetConfig& cfg, int image_size, nn::ParamStore<T>& store, Rng& rng);

/// Base U-Net with the branch residuals added to its skip and bottleneck
/// activations before decoding.
template <typename T>
nn::Tensor<T> controlled_forward(const UNet<T>& base, const ControlBranch<T>& branch,
                                 const nn::Tensor<T>& z, std::span<const int> t,
                                 std::span<const int> class_ids, const nn::Tensor<T>& mask);

}  // namespace usdiff::models
