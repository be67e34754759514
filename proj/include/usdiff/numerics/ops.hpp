#pragma once

#include <cstdint>
#include <span>

#include "usdiff/numerics/tensor.hpp"

// Differentiable tensor ops. Layout is NCHW, row-major. There is no general
// broadcasting: the only implicit expansion is bias addition (conv2d, linear,
// add_channel_bias).

namespace usdiff::nn {

/// Cross-correlation of x[N,C,H,W] with weight[K,C,kh,kw]; bias[K] may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int padding);

/// x[N,D] * weight[D,E] + bias[E]; bias may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int groups, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps = T(1e-5));

template <typename T>
Tensor<T> silu(const Tensor<T>& x);
template <typename T>
Tensor<T> tanh(const Tensor<T>& x);
template <typename T>
Tensor<T> exp(const Tensor<T>& x);
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
/// Gradient passes only where lo < x < hi.
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);

/// x[N,C,H,W] + b[N,C] broadcast over H,W.
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& b);
/// Concatenate along axis 1 (channels) for 4-d inputs.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
/// Channels [begin, end) of a 4-d tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t end);
template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x);
/// [N,C,H,W] -> [N,C]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// [N,C,H,W] -> [N,H*W,C]
template <typename T>
Tensor<T> nchw_to_tokens(const Tensor<T>& x);
/// [N,L,C] -> [N,C,H,W] with L = H*W
template <typename T>
Tensor<T> tokens_to_nchw(const Tensor<T>& x, std::int64_t height, std::int64_t width);
/// Rows of table[R,D] selected by ids -> [ids.size(), D]
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const int> ids);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b);
/// KL(N(mu, exp(logvar)) || N(0, 1)), averaged over elements:
/// 0.5 * mean(mu^2 + exp(logvar) - 1 - logvar).
template <typename T>
Tensor<T> kl_normal(const Tensor<T>& mu, const Tensor<T>& logvar);
/// Mean negative log-likelihood of labels under softmax(logits[N,K]).
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

/// softmax(q k^T / sqrt(D)) v for q, k, v of shape [N,L,D].
template <typename T>
Tensor<T> attention_single_head(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v);

}  // namespace usdiff::nn
