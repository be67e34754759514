#include <cmath>
#include <vector>

#include "usdiff/numerics/kernels.hpp"
#include "usdiff/numerics/tensor.hpp"

namespace usdiff::nn::kernels {

Conv2dDims make_conv2d_dims(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                            std::int64_t k, std::int64_t kh, std::int64_t kw, std::int64_t stride,
                            std::int64_t pad) {
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ShapeError("conv2d: kernel sizes must be odd, got " + std::to_string(kh) + "x" +
                     std::to_string(kw));
  }
  // Output size follows the floor convention: trailing rows/cols that do not
  // fit a full stride are dropped.
  const auto span_h = h + 2 * pad - kh;
  const auto span_w = w + 2 * pad - kw;
  if (span_h < 0 || span_w < 0) {
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " larger than padded input " + std::to_string(h) + "x" + std::to_string(w) +
                     " (padding " + std::to_string(pad) + ")");
  }
  return {n, c, h, w, k, kh, kw, stride, pad, span_h / stride + 1, span_w / stride + 1};
}

namespace reference {

template <typename T>
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
          bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T(0);
      for (std::int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void conv2d_forward(const Conv2dDims& d, const T* x, const T* w, const T* bias, T* out) {
  for (std::int64_t n = 0; n < d.n; ++n)
    for (std::int64_t k = 0; k < d.k; ++k)
      for (std::int64_t oy = 0; oy < d.ho; ++oy)
        for (std::int64_t ox = 0; ox < d.wo; ++ox) {
          T acc = bias ? bias[k] : T(0);
          for (std::int64_t c = 0; c < d.c; ++c)
            for (std::int64_t ky = 0; ky < d.kh; ++ky)
              for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                const auto iy = oy * d.stride - d.pad + ky;
                const auto ix = ox * d.stride - d.pad + kx;
                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                acc += x[((n * d.c + c) * d.h + iy) * d.w + ix] *
                       w[((k * d.c + c) * d.kh + ky) * d.kw + kx];
              }
          out[((n * d.k + k) * d.ho + oy) * d.wo + ox] = acc;
        }
}

template <typename T>
void conv2d_backward_input(const Conv2dDims& d, const T* w, const T* grad_out, T* grad_x) {
  for (std::int64_t n = 0; n < d.n; ++n)
    for (std::int64_t k = 0; k < d.k; ++k)
      for (std::int64_t oy = 0; oy < d.ho; ++oy)
        for (std::int64_t ox = 0; ox < d.wo; ++ox) {
          const T g = grad_out[((n * d.k + k) * d.ho + oy) * d.wo + ox];
          for (std::int64_t c = 0; c < d.c; ++c)
            for (std::int64_t ky = 0; ky < d.kh; ++ky)
              for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                const auto iy = oy * d.stride - d.pad + ky;
                const auto ix = ox * d.stride - d.pad + kx;
                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                grad_x[((n * d.c + c) * d.h + iy) * d.w + ix] +=
                    g * w[((k * d.c + c) * d.kh + ky) * d.kw + kx];
              }
        }
}

template <typename T>
void conv2d_backward_weight(const Conv2dDims& d, const T* x, const T* grad_out, T* grad_w,
                            T* grad_bias) {
  for (std::int64_t n = 0; n < d.n; ++n)
    for (std::int64_t k = 0; k < d.k; ++k)
      for (std::int64_t oy = 0; oy < d.ho; ++oy)
        for (std::int64_t ox = 0; ox < d.wo; ++ox) {
          const T g = grad_out[((n * d.k + k) * d.ho + oy) * d.wo + ox];
          if (grad_bias) grad_bias[k] += g;
          for (std::int64_t c = 0; c < d.c; ++c)
            for (std::int64_t ky = 0; ky < d.kh; ++ky)
              for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                const auto iy = oy * d.stride - d.pad + ky;
                const auto ix = ox * d.stride - d.pad + kx;
                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                grad_w[((k * d.c + c) * d.kh + ky) * d.kw + kx] +=
                    g * x[((n * d.c + c) * d.h + iy) * d.w + ix];
              }
        }
}

template <typename T>
void attention_forward(std::int64_t n, std::int64_t len, std::int64_t dim, const T* q, const T* k,
                       const T* v, T* out, T* probs) {
  const T scale = T(1) / std::sqrt(static_cast<T>(dim));
  std::vector<T> row(static_cast<std::size_t>(len));
  for (std::int64_t b = 0; b < n; ++b) {
    const T* qb = q + b * len * dim;
    const T* kb = k + b * len * dim;
    const T* vb = v + b * len * dim;
    for (std::int64_t i = 0; i < len; ++i) {
      T mx = -INFINITY;
      for (std::int64_t j = 0; j < len; ++j) {
        T s = 0;
        for (std::int64_t e = 0; e < dim; ++e) s += qb[i * dim + e] * kb[j * dim + e];
        row[j] = s * scale;
        mx = std::max(mx, row[j]);
      }
      T total = 0;
      for (std::int64_t j = 0; j < len; ++j) {
        row[j] = std::exp(row[j] - mx);
        total += row[j];
      }
      T* p = probs + (b * len + i) * len;
      for (std::int64_t j = 0; j < len; ++j) p[j] = row[j] / total;
      T* o = out + (b * len + i) * dim;
      for (std::int64_t e = 0; e < dim; ++e) {
        T acc = 0;
        for (std::int64_t j = 0; j < len; ++j) acc += p[j] * vb[j * dim + e];
        o[e] = acc;
      }
    }
  }
}

#define USDIFF_INSTANTIATE(T)                                                                  \
  template void gemm<T>(std::int64_t, std::int64_t, std::int64_t, const T*, const T*, T*,     \
                        bool);                                                                 \
  template void conv2d_forward<T>(const Conv2dDims&, const T*, const T*, const T*, T*);        \
  template void conv2d_backward_input<T>(const Conv2dDims&, const T*, const T*, T*);           \
  template void conv2d_backward_weight<T>(const Conv2dDims&, const T*, const T*, T*, T*);      \
  template void attention_forward<T>(std::int64_t, std::int64_t, std::int64_t, const T*,      \
                                     const T*, const T*, T*, T*);
USDIFF_INSTANTIATE(float)
USDIFF_INSTANTIATE(double)
#undef USDIFF_INSTANTIATE

}  // namespace reference
}  // namespace usdiff::nn::kernels
