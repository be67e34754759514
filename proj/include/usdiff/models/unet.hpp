#pragma once

#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "usdiff/models/layers.hpp"

namespace usdiff::models {

struct UNetConfig {
  int in_channels = 4;
  int base_channels = 32;
  std::vector<int> channel_mult{1, 2, 4};
  int res_blocks_per_level = 2;
  int time_embed_dim = 128;
  int num_classes = 4;  // last row is the null (unconditional) token
  bool attention_at_bottleneck = true;
  int latent_size = 8;
  int max_timestep = 1000;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  /// Channel counts of the skip activations, in the order the encoder emits them.
  std::vector<int> skip_channels() const;
  int mid_channels() const { return base_channels * channel_mult.back(); }
};

void to_json(nlohmann::json& j, const UNetConfig& c);
void from_json(const nlohmann::json& j, UNetConfig& c);

/// Interleaved (sin, cos) pairs of t / 10000^(2i/dim).
template <typename T>
nn::Tensor<T> sinusoidal_embed(std::span<const int> t, int dim);

template <typename T>
struct ResBlock {
  GroupNorm<T> norm1, norm2;
  Conv2d<T> conv1, conv2, skip;
  Linear<T> emb_proj;
  bool has_skip = false;

  ResBlock() = default;
  ResBlock(const Builder<T>& b, int cin, int cout, int emb_dim);
  nn::Tensor<T> operator()(const nn::Tensor<T>& x, const nn::Tensor<T>& emb_act) const;
};

template <typename T>
struct AttentionBlock {
  GroupNorm<T> norm;
  Linear<T> q, k, v, out;

  AttentionBlock() = default;
  AttentionBlock(const Builder<T>& b, int channels);
  nn::Tensor<T> operator()(const nn::Tensor<T>& x) const;
};

/// Encoder activations handed to the decoder.
template <typename T>
struct UNetFeatures {
  std::vector<nn::Tensor<T>> skips;
  nn::Tensor<T> mid;
  nn::Tensor<T> emb_act;  // silu(time + class embedding)
};

/// Time/class embedding, input conv, down path and bottleneck. The control
/// branch instantiates a second copy of this under its own prefix.
template <typename T>
class UNetEncoder {
 public:
  UNetEncoder() = default;
  UNetEncoder(const UNetConfig& cfg, const Builder<T>& b);

  /// `hint` (optional, [N, base_channels, S, S]) is added to the input conv
  /// output.
  UNetFeatures<T> operator()(const nn::Tensor<T>& z, std::span<const int> t,
                             std::span<const int> class_ids,
                             const nn::Tensor<T>& hint = {}) const;

 private:
  UNetConfig cfg_;
  Linear<T> time1_, time2_;
  nn::Tensor<T> class_table_;
  Conv2d<T> conv_in_;
  std::vector<std::vector<ResBlock<T>>> down_;
  std::vector<Conv2d<T>> downsample_;
  ResBlock<T> mid1_, mid2_;
  AttentionBlock<T> mid_attn_;
};

template <typename T>
class UNetDecoder {
 public:
  UNetDecoder() = default;
  UNetDecoder(const UNetConfig& cfg, const Builder<T>& b);
  nn::Tensor<T> operator()(const UNetFeatures<T>& f) const;

 private:
  UNetConfig cfg_;
  std::vector<std::vector<ResBlock<T>>> up_;
  std::vector<Conv2d<T>> upsample_;
  GroupNorm<T> out_norm_;
  Conv2d<T> out_conv_;
};

/// Class-conditional epsilon predictor. Parameters live under "unet.".
template <typename T>
class UNet {
 public:
  UNet() = default;
  UNet(const UNetConfig& cfg, const Builder<T>& b);

  nn::Tensor<T> operator()(const nn::Tensor<T>& z, std::span<const int> t,
                           std::span<const int> class_ids) const;

  const UNetConfig& config() const { return cfg_; }
  const UNetEncoder<T>& encoder() const { return encoder_; }
  const UNetDecoder<T>& decoder() const { return decoder_; }
  void check_inputs(const nn::Tensor<T>& z, std::span<const int> t,
                    std::span<const int> class_ids) const;

 private:
  UNetConfig cfg_;
  UNetEncoder<T> encoder_;
  UNetDecoder<T> decoder_;
};

}  // namespace usdiff::models
