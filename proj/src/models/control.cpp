#include "usdiff/models/control.hpp"

#include <stdexcept>

namespace usdiff::models {

using nn::Tensor;

namespace {

// Stride-2 stages needed to bring the mask down to latent resolution.
int hint_stages(int image_size, int latent_size) {
  int n = 0;
  for (int s = image_size; s > latent_size; s /= 2) ++n;
  if ((latent_size << n) != image_size) {
    throw std::invalid_argument("control: image size " + std::to_string(image_size) +
                                " is not latent size times a power of 2");
  }
  return n;
}

}  // namespace

template <typename T>
ControlBranch<T>::ControlBranch(const UNetConfig& cfg, int image_size, const Builder<T>& b)
    : cfg_(cfg), image_size_(image_size) {
  const int stages = hint_stages(image_size, cfg.latent_size);
  const int width = cfg.base_channels;
  int ch = 1;
  for (int i = 0; i < stages; ++i) {
    const int out = i == 0 ? std::max(width / 2, 8) : width;
    hint_.emplace_back(b.scope("hint").scope(std::to_string(i)), ch, out, 3, 2);
    ch = out;
  }
  encoder_ = UNetEncoder<T>(cfg, b);
  const auto skips = cfg.skip_channels();
  for (std::size_t i = 0; i < skips.size(); ++i) {
    zero_.emplace_back(b.scope("zero").scope(std::to_string(i)), skips[i], skips[i], 1, 1, true);
  }
  zero_.emplace_back(b.scope("zero").scope(std::to_string(skips.size())), cfg.mid_channels(),
                     cfg.mid_channels(), 1, 1, true);
}

template <typename T>
std::vector<Tensor<T>> ControlBranch<T>::residuals(const Tensor<T>& z, std::span<const int> t,
                                                   std::span<const int> class_ids,
                                                   const Tensor<T>& mask) const {
  const nn::Shape want{z.dim(0), 1, image_size_, image_size_};
  if (mask.shape() != want) {
    throw nn::ShapeError("control: mask shape " + nn::to_string(mask.shape()) + ", expected " +
                         nn::to_string(want));
  }
  auto h = mask;
  for (std::size_t i = 0; i < hint_.size(); ++i) {
    h = hint_[i](h);
    if (i + 1 < hint_.size()) h = nn::silu(h);
  }
  auto f = encoder_(z, t, class_ids, h);
  std::vector<Tensor<T>> out;
  for (std::size_t i = 0; i < f.skips.size(); ++i) out.push_back(zero_[i](f.skips[i]));
  out.push_back(zero_.back()(f.mid));
  return out;
}

template <typename T>
ControlBranch<T> graft(const UNetConfig& cfg, int image_size, nn::ParamStore<T>& store, Rng& rng) {
  // Validate the base is complete before touching the store.
  UNet<T> base(cfg, Builder<T>(store).scope("unet"));
  ControlBranch<T> branch(cfg, image_size, Builder<T>(store, rng).scope("control"));
  for (auto& p : store.params()) {
    if (!p.name.starts_with("control.")) continue;
    const auto* src = store.find("unet." + p.name.substr(8));
    if (!src) continue;  // hint encoder and zero convs have no base counterpart
    std::copy(src->tensor.data().begin(), src->tensor.data().end(), p.tensor.data().begin());
  }
  store.set_frozen_prefix("unet.", true);
  return branch;
}

template <typename T>
Tensor<T> controlled_forward(const UNet<T>& base, const ControlBranch<T>& branch,
                             const Tensor<T>& z, std::span<const int> t,
                             std::span<const int> class_ids, const Tensor<T>& mask) {
  base.check_inputs(z, t, class_ids);
  auto f = base.encoder()(z, t, class_ids);
  const auto res = branch.residuals(z, t, class_ids, mask);
  for (std::size_t i = 0; i < f.skips.size(); ++i) f.skips[i] = nn::add(f.skips[i], res[i]);
  f.mid = nn::add(f.mid, res.back());
  return base.decoder()(f);
}

template class ControlBranch<float>;
template class ControlBranch<double>;
template ControlBranch<float> graft<float>(const UNetConfig&, int, nn::ParamStore<float>&, Rng&);
template ControlBranch<double> graft<double>(const UNetConfig&, int, nn::ParamStore<double>&,
                                             Rng&);
template Tensor<float> controlled_forward<float>(const UNet<float>&, const ControlBranch<float>&,
                                                 const Tensor<float>&, std::span<const int>,
                                                 std::span<const int>, const Tensor<float>&);
template Tensor<double> controlled_forward<double>(const UNet<double>&,
                                                   const ControlBranch<double>&,
                                                   const Tensor<double>&, std::span<const int>,
                                                   std::span<const int>, const Tensor<double>&);

}  // namespace usdiff::models
