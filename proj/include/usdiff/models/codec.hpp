#pragma once

#include <nlohmann/json.hpp>
#include <vector>

#include "usdiff/models/layers.hpp"

namespace usdiff::models {

struct CodecConfig {
  int image_size = 64;
  int in_channels = 1;
  int latent_channels = 4;
  int down_factor = 8;
  int base_channels = 32;
  double kl_weight = 1e-4;

  void validate() const;
  int levels() const;
  int latent_size() const { return image_size / down_factor; }
};

void to_json(nlohmann::json& j, const CodecConfig& c);
void from_json(const nlohmann::json& j, CodecConfig& c);

template <typename T>
struct LatentPosterior {
  nn::Tensor<T> mu;
  nn::Tensor<T> logvar;  // clamped to [-30, 20]
};

/// Convolutional VAE: image [N, 1, S, S] in [-1, 1] <-> latent [N, 4, S/8, S/8].
/// Parameters live under the builder's prefix (normally "codec.").
template <typename T>
class Codec {
 public:
  Codec() = default;
  Codec(const CodecConfig& cfg, const Builder<T>& b);

  LatentPosterior<T> encode(const nn::Tensor<T>& image) const;
  nn::Tensor<T> decode(const nn::Tensor<T>& z) const;
  const CodecConfig& config() const { return cfg_; }

 private:
  struct Stage {
    Conv2d<T> conv_a, conv_b;
    GroupNorm<T> norm_a, norm_b;
  };
  CodecConfig cfg_;
  std::vector<Stage> enc_, dec_;
  Conv2d<T> enc_out_, dec_in_, dec_out_;
};

/// z = mu + exp(logvar / 2) * noise
template <typename T>
nn::Tensor<T> reparameterize(const LatentPosterior<T>& p, const nn::Tensor<T>& noise);

/// mse(recon, image) + kl_weight * kl_normal(mu, logvar)
template <typename T>
nn::Tensor<T> codec_loss(const nn::Tensor<T>& image, const nn::Tensor<T>& recon,
                         const LatentPosterior<T>& p, double kl_weight);

/// Standard deviation over all latent values. Requires at least 100 latents
/// (batch items) and nonzero variance.
double latent_scale(const nn::Tensor<float>& latents);

}  // namespace usdiff::models
