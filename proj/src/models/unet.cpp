#include "usdiff/models/unet.hpp"

#include <cmath>
#include <stdexcept>

namespace usdiff::models {

using nn::Tensor;

void UNetConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("unet." + field + ": " + why);
  };
  if (in_channels < 1) fail("in_channels", "must be >= 1");
  if (base_channels < 8 || base_channels % 8 != 0) fail("base_channels", "must be a multiple of 8");
  if (channel_mult.empty()) fail("channel_mult", "must not be empty");
  for (int m : channel_mult)
    if (m < 1) fail("channel_mult", "entries must be >= 1");
  if (res_blocks_per_level < 1) fail("res_blocks_per_level", "must be >= 1");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) fail("time_embed_dim", "must be even");
  if (num_classes < 2) fail("num_classes", "must be >= 2");
  if (latent_size % (1 << (channel_mult.size() - 1)) != 0) {
    fail("latent_size", "must be divisible by 2^(levels-1)");
  }
  if (max_timestep < 1) fail("max_timestep", "must be >= 1");
}

std::vector<int> UNetConfig::skip_channels() const {
  std::vector<int> ch{base_channels};
  for (std::size_t l = 0; l < channel_mult.size(); ++l) {
    for (int i = 0; i < res_blocks_per_level; ++i) ch.push_back(base_channels * channel_mult[l]);
    if (l + 1 < channel_mult.size()) ch.push_back(base_channels * channel_mult[l]);
  }
  return ch;
}

void to_json(nlohmann::json& j, const UNetConfig& c) {
  j = {{"in_channels", c.in_channels},
       {"base_channels", c.base_channels},
       {"channel_mult", c.channel_mult},
       {"res_blocks_per_level", c.res_blocks_per_level},
       {"time_embed_dim", c.time_embed_dim},
       {"num_classes", c.num_classes},
       {"attention_at_bottleneck", c.attention_at_bottleneck},
       {"latent_size", c.latent_size},
       {"max_timestep", c.max_timestep}};
}

void from_json(const nlohmann::json& j, UNetConfig& c) {
  UNetConfig d;
  c.in_channels = j.value("in_channels", d.in_channels);
  c.base_channels = j.value("base_channels", d.base_channels);
  c.channel_mult = j.value("channel_mult", d.channel_mult);
  c.res_blocks_per_level = j.value("res_blocks_per_level", d.res_blocks_per_level);
  c.time_embed_dim = j.value("time_embed_dim", d.time_embed_dim);
  c.num_classes = j.value("num_classes", d.num_classes);
  c.attention_at_bottleneck = j.value("attention_at_bottleneck", d.attention_at_bottleneck);
  c.latent_size = j.value("latent_size", d.latent_size);
  c.max_timestep = j.value("max_timestep", d.max_timestep);
}

template <typename T>
Tensor<T> sinusoidal_embed(std::span<const int> t, int dim) {
  if (dim < 2 || dim % 2 != 0) {
    throw std::invalid_argument("sinusoidal_embed: dim must be even, got " + std::to_string(dim));
  }
  Tensor<T> out({static_cast<std::int64_t>(t.size()), dim});
  for (std::size_t n = 0; n < t.size(); ++n) {
    if (t[n] < 0) throw std::invalid_argument("sinusoidal_embed: negative timestep");
    for (int i = 0; i < dim / 2; ++i) {
      const double arg = t[n] / std::pow(10000.0, 2.0 * i / dim);
      out.data()[n * dim + 2 * i] = static_cast<T>(std::sin(arg));
      out.data()[n * dim + 2 * i + 1] = static_cast<T>(std::cos(arg));
    }
  }
  return out;
}

template <typename T>
ResBlock<T>::ResBlock(const Builder<T>& b, int cin, int cout, int emb_dim)
    : norm1(b.scope("norm1"), cin),
      norm2(b.scope("norm2"), cout),
      conv1(b.scope("conv1"), cin, cout, 3),
      conv2(b.scope("conv2"), cout, cout, 3),
      emb_proj(b.scope("emb"), emb_dim, cout),
      has_skip(cin != cout) {
  if (has_skip) skip = Conv2d<T>(b.scope("skip"), cin, cout, 1);
}

template <typename T>
Tensor<T> ResBlock<T>::operator()(const Tensor<T>& x, const Tensor<T>& emb_act) const {
  auto h = conv1(nn::silu(norm1(x)));
  h = nn::add_channel_bias(h, emb_proj(emb_act));
  h = conv2(nn::silu(norm2(h)));
  return nn::add(has_skip ? skip(x) : x, h);
}

template <typename T>
AttentionBlock<T>::AttentionBlock(const Builder<T>& b, int channels)
    : norm(b.scope("norm"), channels),
      q(b.scope("q"), channels, channels),
      k(b.scope("k"), channels, channels),
      v(b.scope("v"), channels, channels),
      out(b.scope("out"), channels, channels) {}

template <typename T>
Tensor<T> AttentionBlock<T>::operator()(const Tensor<T>& x) const {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto tokens = nn::reshape(nn::nchw_to_tokens(norm(x)), {n * h * w, c});
  auto as_seq = [&](const Tensor<T>& t) { return nn::reshape(t, {n, h * w, c}); };
  auto att = nn::attention_single_head(as_seq(q(tokens)), as_seq(k(tokens)), as_seq(v(tokens)));
  auto o = out(nn::reshape(att, {n * h * w, c}));
  return nn::add(x, nn::tokens_to_nchw(nn::reshape(o, {n, h * w, c}), h, w));
}

template <typename T>
UNetEncoder<T>::UNetEncoder(const UNetConfig& cfg, const Builder<T>& b) : cfg_(cfg) {
  cfg.validate();
  const int e = cfg.time_embed_dim;
  time1_ = Linear<T>(b.scope("time").scope("0"), e, e);
  time2_ = Linear<T>(b.scope("time").scope("1"), e, e);
  class_table_ = b.param("class_table", {cfg.num_classes, e}, Init::fan_in, 1);
  conv_in_ = Conv2d<T>(b.scope("conv_in"), cfg.in_channels, cfg.base_channels, 3);
  int ch = cfg.base_channels;
  const auto levels = cfg.channel_mult.size();
  for (std::size_t l = 0; l < levels; ++l) {
    auto lb = b.scope("down").scope(std::to_string(l));
    const int out = cfg.base_channels * cfg.channel_mult[l];
    std::vector<ResBlock<T>> blocks;
    for (int i = 0; i < cfg.res_blocks_per_level; ++i) {
      blocks.emplace_back(lb.scope("res").scope(std::to_string(i)), ch, out, e);
      ch = out;
    }
    down_.push_back(std::move(blocks));
    if (l + 1 < levels) downsample_.emplace_back(lb.scope("downsample"), ch, ch, 3, 2);
  }
  auto mb = b.scope("mid");
  mid1_ = ResBlock<T>(mb.scope("res").scope("0"), ch, ch, e);
  if (cfg.attention_at_bottleneck) mid_attn_ = AttentionBlock<T>(mb.scope("attn"), ch);
  mid2_ = ResBlock<T>(mb.scope("res").scope("1"), ch, ch, e);
}

template <typename T>
UNetFeatures<T> UNetEncoder<T>::operator()(const Tensor<T>& z, std::span<const int> t,
                                           std::span<const int> class_ids,
                                           const Tensor<T>& hint) const {
  UNetFeatures<T> f;
  auto temb = time2_(nn::silu(time1_(sinusoidal_embed<T>(t, cfg_.time_embed_dim))));
  f.emb_act = nn::silu(nn::add(temb, nn::gather_rows(class_table_, class_ids)));

  auto h = conv_in_(z);
  if (hint.defined()) h = nn::add(h, hint);
  f.skips.push_back(h);
  for (std::size_t l = 0; l < down_.size(); ++l) {
    for (const auto& block : down_[l]) {
      h = block(h, f.emb_act);
      f.skips.push_back(h);
    }
    if (l < downsample_.size()) {
      h = downsample_[l](h);
      f.skips.push_back(h);
    }
  }
  h = mid1_(h, f.emb_act);
  if (cfg_.attention_at_bottleneck) h = mid_attn_(h);
  f.mid = mid2_(h, f.emb_act);
  return f;
}

template <typename T>
UNetDecoder<T>::UNetDecoder(const UNetConfig& cfg, const Builder<T>& b) : cfg_(cfg) {
  const int e = cfg.time_embed_dim;
  auto skip_ch = cfg.skip_channels();
  int ch = cfg.mid_channels();
  const int levels = static_cast<int>(cfg.channel_mult.size());
  for (int l = levels - 1; l >= 0; --l) {
    auto lb = b.scope("up").scope(std::to_string(l));
    const int out = cfg.base_channels * cfg.channel_mult[l];
    std::vector<ResBlock<T>> blocks;
    for (int i = 0; i <= cfg.res_blocks_per_level; ++i) {
      const int sc = skip_ch.back();
      skip_ch.pop_back();
      blocks.emplace_back(lb.scope("res").scope(std::to_string(i)), ch + sc, out, e);
      ch = out;
    }
    up_.push_back(std::move(blocks));
    if (l > 0) upsample_.emplace_back(lb.scope("upsample"), ch, ch, 3);
  }
  out_norm_ = GroupNorm<T>(b.scope("out").scope("norm"), ch);
  out_conv_ = Conv2d<T>(b.scope("out").scope("conv"), ch, cfg.in_channels, 3, 1, true);
}

template <typename T>
Tensor<T> UNetDecoder<T>::operator()(const UNetFeatures<T>& f) const {
  auto h = f.mid;
  std::size_t next = f.skips.size();
  for (std::size_t u = 0; u < up_.size(); ++u) {
    for (const auto& block : up_[u]) h = block(nn::concat_channels(h, f.skips[--next]), f.emb_act);
    if (u < upsample_.size()) h = upsample_[u](nn::upsample_nearest2x(h));
  }
  return out_conv_(nn::silu(out_norm_(h)));
}

template <typename T>
UNet<T>::UNet(const UNetConfig& cfg, const Builder<T>& b)
    : cfg_(cfg), encoder_(cfg, b), decoder_(cfg, b) {}

template <typename T>
void UNet<T>::check_inputs(const Tensor<T>& z, std::span<const int> t,
                           std::span<const int> class_ids) const {
  const nn::Shape expected{z.ndim() == 4 ? z.dim(0) : -1, cfg_.in_channels, cfg_.latent_size,
                           cfg_.latent_size};
  if (z.shape() != expected) {
    throw nn::ShapeError("unet: latent shape " + nn::to_string(z.shape()) + ", expected [N, " +
                         std::to_string(cfg_.in_channels) + ", " +
                         std::to_string(cfg_.latent_size) + ", " +
                         std::to_string(cfg_.latent_size) + "]");
  }
  const auto n = static_cast<std::size_t>(z.dim(0));
  if (t.size() != n || class_ids.size() != n) {
    throw nn::ShapeError("unet: timestep/class count does not match batch size");
  }
  for (int ti : t)
    if (ti < 1 || ti > cfg_.max_timestep)
      throw std::out_of_range("unet: timestep " + std::to_string(ti) + " outside [1, " +
                              std::to_string(cfg_.max_timestep) + "]");
  for (int c : class_ids)
    if (c < 0 || c >= cfg_.num_classes)
      throw std::out_of_range("unet: class id " + std::to_string(c) + " outside [0, " +
                              std::to_string(cfg_.num_classes) + ")");
}

template <typename T>
Tensor<T> UNet<T>::operator()(const Tensor<T>& z, std::span<const int> t,
                              std::span<const int> class_ids) const {
  check_inputs(z, t, class_ids);
  return decoder_(encoder_(z, t, class_ids));
}

template Tensor<float> sinusoidal_embed<float>(std::span<const int>, int);
template Tensor<double> sinusoidal_embed<double>(std::span<const int>, int);
template struct ResBlock<float>;
template struct ResBlock<double>;
template struct AttentionBlock<float>;
template struct AttentionBlock<double>;
template class UNetEncoder<float>;
template class UNetEncoder<double>;
template class UNetDecoder<float>;
template class UNetDecoder<double>;
template class UNet<float>;
template class UNet<double>;

}  // namespace usdiff::models
