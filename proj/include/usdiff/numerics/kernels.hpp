#pragma once

#include <cstdint>

// Raw compute kernels behind the differentiable ops. Two implementations with
// identical signatures: `reference` is the plain serial loop nest kept as the
// testing baseline, `parallel` is the im2col + blocked GEMM path with OpenMP
// that the ops actually call. Gradient kernels accumulate into their outputs.
//
// Every parallel kernel partitions its outputs across threads and reduces in
// a fixed order, so results are bit-identical for any thread count.

namespace usdiff::nn::kernels {

struct Conv2dDims {
  std::int64_t n, c, h, w;  // input
  std::int64_t k, kh, kw;   // filters
  std::int64_t stride, pad;
  std::int64_t ho, wo;      // output
};

Conv2dDims make_conv2d_dims(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                            std::int64_t k, std::int64_t kh, std::int64_t kw, std::int64_t stride,
                            std::int64_t pad);

namespace reference {

/// C[M,N] (+)= A[M,K] * B[K,N], all row-major and contiguous.
template <typename T>
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
          bool accumulate);

template <typename T>
void conv2d_forward(const Conv2dDims& d, const T* x, const T* w, const T* bias, T* out);
template <typename T>
void conv2d_backward_input(const Conv2dDims& d, const T* w, const T* grad_out, T* grad_x);
template <typename T>
void conv2d_backward_weight(const Conv2dDims& d, const T* x, const T* grad_out, T* grad_w,
                            T* grad_bias);

/// out = softmax(q k^T / sqrt(dim)) v per batch item; probs receives the
/// [n, len, len] attention weights.
template <typename T>
void attention_forward(std::int64_t n, std::int64_t len, std::int64_t dim, const T* q, const T* k,
                       const T* v, T* out, T* probs);

}  // namespace reference

namespace parallel {

template <typename T>
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
          bool accumulate);

template <typename T>
void conv2d_forward(const Conv2dDims& d, const T* x, const T* w, const T* bias, T* out);
template <typename T>
void conv2d_backward_input(const Conv2dDims& d, const T* w, const T* grad_out, T* grad_x);
template <typename T>
void conv2d_backward_weight(const Conv2dDims& d, const T* x, const T* grad_out, T* grad_w,
                            T* grad_bias);

template <typename T>
void attention_forward(std::int64_t n, std::int64_t len, std::int64_t dim, const T* q, const T* k,
                       const T* v, T* out, T* probs);

}  // namespace parallel

}  // namespace usdiff::nn::kernels
