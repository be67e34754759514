#include "usdiff/models/codec.hpp"

#include <cmath>
#include <stdexcept>

namespace usdiff::models {

using nn::Tensor;

void CodecConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("codec." + field + ": " + why);
  };
  if (down_factor < 2 || (down_factor & (down_factor - 1)) != 0) {
    fail("down_factor", "must be a power of 2");
  }
  if (image_size < down_factor || image_size % down_factor != 0) {
    fail("image_size", "must be divisible by down_factor");
  }
  if (in_channels < 1 || latent_channels < 1) fail("channels", "must be >= 1");
  if (base_channels < 8 || base_channels % 8 != 0) fail("base_channels", "must be a multiple of 8");
  if (!(kl_weight >= 0)) fail("kl_weight", "must be >= 0");
}

int CodecConfig::levels() const {
  int l = 0;
  for (int f = down_factor; f > 1; f /= 2) ++l;
  return l;
}

void to_json(nlohmann::json& j, const CodecConfig& c) {
  j = {{"image_size", c.image_size},       {"in_channels", c.in_channels},
       {"latent_channels", c.latent_channels}, {"down_factor", c.down_factor},
       {"base_channels", c.base_channels}, {"kl_weight", c.kl_weight}};
}

void from_json(const nlohmann::json& j, CodecConfig& c) {
  CodecConfig d;
  c.image_size = j.value("image_size", d.image_size);
  c.in_channels = j.value("in_channels", d.in_channels);
  c.latent_channels = j.value("latent_channels", d.latent_channels);
  c.down_factor = j.value("down_factor", d.down_factor);
  c.base_channels = j.value("base_channels", d.base_channels);
  c.kl_weight = j.value("kl_weight", d.kl_weight);
}

template <typename T>
Codec<T>::Codec(const CodecConfig& cfg, const Builder<T>& b) : cfg_(cfg) {
  cfg.validate();
  const int c = cfg.base_channels;
  for (int l = 0; l < cfg.levels(); ++l) {
    auto sb = b.scope("enc").scope(std::to_string(l));
    enc_.push_back({Conv2d<T>(sb.scope("conv_a"), l == 0 ? cfg.in_channels : c, c, 3, 2),
                    Conv2d<T>(sb.scope("conv_b"), c, c, 3), GroupNorm<T>(sb.scope("norm_a"), c),
                    GroupNorm<T>(sb.scope("norm_b"), c)});
  }
  enc_out_ = Conv2d<T>(b.scope("enc_out"), c, 2 * cfg.latent_channels, 3);
  dec_in_ = Conv2d<T>(b.scope("dec_in"), cfg.latent_channels, c, 3);
  for (int l = 0; l < cfg.levels(); ++l) {
    auto sb = b.scope("dec").scope(std::to_string(l));
    dec_.push_back({Conv2d<T>(sb.scope("conv_a"), c, c, 3), Conv2d<T>(sb.scope("conv_b"), c, c, 3),
                    GroupNorm<T>(sb.scope("norm_a"), c), GroupNorm<T>(sb.scope("norm_b"), c)});
  }
  dec_out_ = Conv2d<T>(b.scope("dec_out"), c, cfg.in_channels, 3);
}

template <typename T>
LatentPosterior<T> Codec<T>::encode(const Tensor<T>& image) const {
  const nn::Shape want{image.ndim() == 4 ? image.dim(0) : -1, cfg_.in_channels, cfg_.image_size,
                       cfg_.image_size};
  if (image.shape() != want) {
    throw nn::ShapeError("codec.encode: image shape " + nn::to_string(image.shape()) +
                         ", expected [N, " + std::to_string(cfg_.in_channels) + ", " +
                         std::to_string(cfg_.image_size) + ", " + std::to_string(cfg_.image_size) +
                         "]");
  }
  auto h = image;
  for (const auto& s : enc_) {
    h = nn::silu(s.norm_a(s.conv_a(h)));
    h = nn::silu(s.norm_b(s.conv_b(h)));
  }
  auto moments = enc_out_(h);
  const auto lc = cfg_.latent_channels;
  return {nn::slice_channels(moments, 0, lc),
          nn::clamp(nn::slice_channels(moments, lc, 2 * lc), T(-30), T(20))};
}

template <typename T>
Tensor<T> Codec<T>::decode(const Tensor<T>& z) const {
  const auto ls = cfg_.latent_size();
  const nn::Shape want{z.ndim() == 4 ? z.dim(0) : -1, cfg_.latent_channels, ls, ls};
  if (z.shape() != want) {
    throw nn::ShapeError("codec.decode: latent shape " + nn::to_string(z.shape()) +
                         ", expected [N, " + std::to_string(cfg_.latent_channels) + ", " +
                         std::to_string(ls) + ", " + std::to_string(ls) + "]");
  }
  auto h = dec_in_(z);
  for (const auto& s : dec_) {
    h = nn::silu(s.norm_a(s.conv_a(h)));
    h = nn::upsample_nearest2x(h);
    h = nn::silu(s.norm_b(s.conv_b(h)));
  }
  return nn::tanh(dec_out_(h));
}

template <typename T>
Tensor<T> reparameterize(const LatentPosterior<T>& p, const Tensor<T>& noise) {
  if (noise.shape() != p.mu.shape()) {
    throw nn::ShapeError("reparameterize: noise shape " + nn::to_string(noise.shape()) +
                         " does not match mu " + nn::to_string(p.mu.shape()));
  }
  return nn::add(p.mu, nn::mul(nn::exp(nn::scale(p.logvar, T(0.5))), noise));
}

template <typename T>
Tensor<T> codec_loss(const Tensor<T>& image, const Tensor<T>& recon, const LatentPosterior<T>& p,
                     double kl_weight) {
  auto rec = nn::mse_loss(recon, image);
  if (kl_weight == 0.0) return rec;
  return nn::add(rec, nn::scale(nn::kl_normal(p.mu, p.logvar), static_cast<T>(kl_weight)));
}

double latent_scale(const Tensor<float>& latents) {
  if (latents.ndim() < 1 || latents.dim(0) < 100) {
    throw std::invalid_argument("latent_scale: need at least 100 latents, got " +
                                std::to_string(latents.ndim() < 1 ? 0 : latents.dim(0)));
  }
  double sum = 0, sq = 0;
  for (float v : latents.data()) sum += v;
  const double mean = sum / latents.numel();
  for (float v : latents.data()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / latents.numel());
  if (!(sd > 0.0)) throw std::invalid_argument("latent_scale: latents have zero variance");
  return sd;
}

template class Codec<float>;
template class Codec<double>;
template Tensor<float> reparameterize<float>(const LatentPosterior<float>&, const Tensor<float>&);
template Tensor<double> reparameterize<double>(const LatentPosterior<double>&,
                                               const Tensor<double>&);
template Tensor<float> codec_loss<float>(const Tensor<float>&, const Tensor<float>&,
                                         const LatentPosterior<float>&, double);
template Tensor<double> codec_loss<double>(const Tensor<double>&, const Tensor<double>&,
                                           const LatentPosterior<double>&, double);

}  // namespace usdiff::models
