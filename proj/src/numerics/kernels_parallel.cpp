#include <algorithm>
#include <cmath>
#include <vector>

#include "usdiff/numerics/kernels.hpp"

namespace usdiff::nn::kernels::parallel {

namespace {

using Index = std::int64_t;

// Register tile: kRows rows of C by kCols(T) columns, 4 vector registers wide.
constexpr Index kRows = 4;
template <typename T>
constexpr Index kCols = 256 / static_cast<Index>(sizeof(T));

// b is a packed strip: k rows of exactly kCols<T> contiguous values.
template <typename T>
inline void tile_full(Index ldc, Index k, const T* a, const T* b, T* c, bool accumulate) {
  constexpr Index cols = kCols<T>;
  T acc[kRows][cols];
  for (Index r = 0; r < kRows; ++r)
    for (Index j = 0; j < cols; ++j) acc[r][j] = accumulate ? c[r * ldc + j] : T(0);
  for (Index p = 0; p < k; ++p) {
    const T* brow = b + p * cols;
#pragma GCC unroll 4
    for (Index r = 0; r < kRows; ++r) {
      const T av = a[r * k + p];
#pragma omp simd
      for (Index j = 0; j < cols; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (Index r = 0; r < kRows; ++r)
    for (Index j = 0; j < cols; ++j) c[r * ldc + j] = acc[r][j];
}

template <typename T>
inline void tile_edge(Index rows, Index width, Index ldc, Index k, const T* a, const T* b, T* c,
                      bool accumulate) {
  constexpr Index cols = kCols<T>;
  for (Index r = 0; r < rows; ++r) {
    T* crow = c + r * ldc;
    if (!accumulate) std::fill(crow, crow + width, T(0));
    for (Index p = 0; p < k; ++p) {
      const T av = a[r * k + p];
      const T* brow = b + p * cols;
#pragma omp simd
      for (Index j = 0; j < width; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T, both operands read along their rows. Used for
// weight gradients where K (pixels x batch) is long and M, N are small.
template <typename T>
void gemm_nt_accumulate(Index m, Index n, Index k, const T* a, const T* b, T* c) {
  constexpr Index kLanes = 64 / static_cast<Index>(sizeof(T));
  constexpr Index kTile = 4;
  const Index row_blocks = (m + kTile - 1) / kTile;
  const Index col_blocks = (n + kTile - 1) / kTile;
  const Index k_main = k - k % kLanes;
#pragma omp parallel for schedule(static)
  for (Index blk = 0; blk < row_blocks * col_blocks; ++blk) {
    const Index i0 = (blk / col_blocks) * kTile;
    const Index j0 = (blk % col_blocks) * kTile;
    const Index rows = std::min(kTile, m - i0);
    const Index cols = std::min(kTile, n - j0);
    if (rows == kTile && cols == kTile) {
      T acc[kTile][kTile][kLanes] = {};
      for (Index p = 0; p < k_main; p += kLanes) {
#pragma GCC unroll 4
        for (Index r = 0; r < kTile; ++r) {
          const T* ar = a + (i0 + r) * k + p;
#pragma GCC unroll 4
          for (Index q = 0; q < kTile; ++q) {
            const T* bq = b + (j0 + q) * k + p;
#pragma omp simd
            for (Index v = 0; v < kLanes; ++v) acc[r][q][v] += ar[v] * bq[v];
          }
        }
      }
      for (Index r = 0; r < kTile; ++r)
        for (Index q = 0; q < kTile; ++q) {
          T total = 0;
          for (Index v = 0; v < kLanes; ++v) total += acc[r][q][v];
          const T* ar = a + (i0 + r) * k;
          const T* bq = b + (j0 + q) * k;
          for (Index p = k_main; p < k; ++p) total += ar[p] * bq[p];
          c[(i0 + r) * n + j0 + q] += total;
        }
    } else {
      for (Index r = 0; r < rows; ++r)
        for (Index q = 0; q < cols; ++q) {
          const T* ar = a + (i0 + r) * k;
          const T* bq = b + (j0 + q) * k;
          T lanes[kLanes] = {};
          for (Index p = 0; p < k_main; p += kLanes)
#pragma omp simd
            for (Index v = 0; v < kLanes; ++v) lanes[v] += ar[p + v] * bq[p + v];
          T total = 0;
          for (Index v = 0; v < kLanes; ++v) total += lanes[v];
          for (Index p = k_main; p < k; ++p) total += ar[p] * bq[p];
          c[(i0 + r) * n + j0 + q] += total;
        }
    }
  }
}

// Column layout shared by the conv kernels: a chunk of `count` samples starting
// at sample `first` is unrolled to col[(c*kh+ky)*kw+kx][s*ho*wo + oy*wo + ox].
template <typename T>
void im2col(const Conv2dDims& d, const T* x, Index first, Index count, T* col) {
  const Index plane = d.ho * d.wo;
  const Index cols = count * plane;
  const Index rows = d.c * d.kh * d.kw;
#pragma omp parallel for schedule(static)
  for (Index row = 0; row < rows; ++row) {
    const Index kx = row % d.kw;
    const Index ky = (row / d.kw) % d.kh;
    const Index c = row / (d.kw * d.kh);
    T* dst = col + row * cols;
    for (Index s = 0; s < count; ++s) {
      const T* src = x + ((first + s) * d.c + c) * d.h * d.w;
      for (Index oy = 0; oy < d.ho; ++oy) {
        const Index iy = oy * d.stride - d.pad + ky;
        T* out = dst + s * plane + oy * d.wo;
        if (iy < 0 || iy >= d.h) {
          std::fill(out, out + d.wo, T(0));
          continue;
        }
        for (Index ox = 0; ox < d.wo; ++ox) {
          const Index ix = ox * d.stride - d.pad + kx;
          out[ox] = (ix < 0 || ix >= d.w) ? T(0) : src[iy * d.w + ix];
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const Conv2dDims& d, const T* col, Index first, Index count, T* grad_x) {
  const Index plane = d.ho * d.wo;
  const Index cols = count * plane;
  // Each (sample, channel) image is owned by one iteration: no write races.
#pragma omp parallel for schedule(static)
  for (Index sc = 0; sc < count * d.c; ++sc) {
    const Index s = sc / d.c;
    const Index c = sc % d.c;
    T* dst = grad_x + ((first + s) * d.c + c) * d.h * d.w;
    for (Index ky = 0; ky < d.kh; ++ky)
      for (Index kx = 0; kx < d.kw; ++kx) {
        const T* src = col + ((c * d.kh + ky) * d.kw + kx) * cols + s * plane;
        for (Index oy = 0; oy < d.ho; ++oy) {
          const Index iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.h) continue;
          for (Index ox = 0; ox < d.wo; ++ox) {
            const Index ix = ox * d.stride - d.pad + kx;
            if (ix < 0 || ix >= d.w) continue;
            dst[iy * d.w + ix] += src[oy * d.wo + ox];
          }
        }
      }
  }
}

// grad_out chunk [count, K, plane] -> [K, count*plane]
template <typename T>
void gather_out(const Conv2dDims& d, const T* grad_out, Index first, Index count, T* dst) {
  const Index plane = d.ho * d.wo;
  const Index cols = count * plane;
  for (Index k = 0; k < d.k; ++k)
    for (Index s = 0; s < count; ++s)
      std::copy_n(grad_out + ((first + s) * d.k + k) * plane, plane, dst + k * cols + s * plane);
}

template <typename T>
void transpose(Index rows, Index cols, const T* src, T* dst) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < cols; ++i)
    for (Index j = 0; j < rows; ++j) dst[i * rows + j] = src[j * cols + i];
}

Index chunk_samples(const Conv2dDims& d) {
  constexpr Index kTargetCols = 4096;
  const Index plane = d.ho * d.wo;
  return std::clamp<Index>(kTargetCols / std::max<Index>(plane, 1), 1, d.n);
}

}  // namespace

template <typename T>
void gemm(Index m, Index n, Index k, const T* a, const T* b, T* c, bool accumulate) {
  constexpr Index cols = kCols<T>;
  const Index col_blocks = (n + cols - 1) / cols;
  // One column strip per iteration: pack it once, sweep every row block.
#pragma omp parallel
  {
    std::vector<T> strip(static_cast<std::size_t>(k * cols), T(0));
#pragma omp for schedule(static)
    for (Index jb = 0; jb < col_blocks; ++jb) {
      const Index j0 = jb * cols;
      const Index width = std::min(cols, n - j0);
      for (Index p = 0; p < k; ++p) std::copy_n(b + p * n + j0, width, strip.data() + p * cols);
      for (Index i0 = 0; i0 < m; i0 += kRows) {
        const Index rows = std::min(kRows, m - i0);
        T* cblk = c + i0 * n + j0;
        if (rows == kRows && width == cols) {
          tile_full(n, k, a + i0 * k, strip.data(), cblk, accumulate);
        } else {
          tile_edge(rows, width, n, k, a + i0 * k, strip.data(), cblk, accumulate);
        }
      }
    }
  }
}

template <typename T>
void conv2d_forward(const Conv2dDims& d, const T* x, const T* w, const T* bias, T* out) {
  const Index plane = d.ho * d.wo;
  const Index rows = d.c * d.kh * d.kw;
  const Index chunk = chunk_samples(d);
  std::vector<T> col(static_cast<std::size_t>(rows * chunk * plane));
  std::vector<T> tmp(static_cast<std::size_t>(d.k * chunk * plane));
  for (Index first = 0; first < d.n; first += chunk) {
    const Index count = std::min(chunk, d.n - first);
    const Index cols = count * plane;
    im2col(d, x, first, count, col.data());
    gemm(d.k, cols, rows, w, col.data(), tmp.data(), false);
#pragma omp parallel for schedule(static)
    for (Index sk = 0; sk < count * d.k; ++sk) {
      const Index s = sk / d.k;
      const Index k = sk % d.k;
      const T b = bias ? bias[k] : T(0);
      const T* src = tmp.data() + k * cols + s * plane;
      T* dst = out + ((first + s) * d.k + k) * plane;
      for (Index p = 0; p < plane; ++p) dst[p] = src[p] + b;
    }
  }
}

template <typename T>
void conv2d_backward_input(const Conv2dDims& d, const T* w, const T* grad_out, T* grad_x) {
  const Index plane = d.ho * d.wo;
  const Index rows = d.c * d.kh * d.kw;
  const Index chunk = chunk_samples(d);
  std::vector<T> wt(static_cast<std::size_t>(rows * d.k));
  transpose(d.k, rows, w, wt.data());
  std::vector<T> gout(static_cast<std::size_t>(d.k * chunk * plane));
  std::vector<T> dcol(static_cast<std::size_t>(rows * chunk * plane));
  for (Index first = 0; first < d.n; first += chunk) {
    const Index count = std::min(chunk, d.n - first);
    const Index cols = count * plane;
    gather_out(d, grad_out, first, count, gout.data());
    gemm(rows, cols, d.k, wt.data(), gout.data(), dcol.data(), false);
    col2im_add(d, dcol.data(), first, count, grad_x);
  }
}

template <typename T>
void conv2d_backward_weight(const Conv2dDims& d, const T* x, const T* grad_out, T* grad_w,
                            T* grad_bias) {
  const Index plane = d.ho * d.wo;
  const Index rows = d.c * d.kh * d.kw;
  const Index chunk = chunk_samples(d);
  std::vector<T> col(static_cast<std::size_t>(rows * chunk * plane));
  std::vector<T> gout(static_cast<std::size_t>(d.k * chunk * plane));
  for (Index first = 0; first < d.n; first += chunk) {
    const Index count = std::min(chunk, d.n - first);
    const Index cols = count * plane;
    im2col(d, x, first, count, col.data());
    gather_out(d, grad_out, first, count, gout.data());
    gemm_nt_accumulate(d.k, rows, cols, gout.data(), col.data(), grad_w);
    if (grad_bias) {
      for (Index k = 0; k < d.k; ++k) {
        T acc = 0;
        const T* g = gout.data() + k * cols;
        for (Index p = 0; p < cols; ++p) acc += g[p];
        grad_bias[k] += acc;
      }
    }
  }
}

template <typename T>
void attention_forward(Index n, Index len, Index dim, const T* q, const T* k, const T* v, T* out,
                       T* probs) {
  const T scale = T(1) / std::sqrt(static_cast<T>(dim));
#pragma omp parallel for schedule(static)
  for (Index b = 0; b < n; ++b) {
    const T* qb = q + b * len * dim;
    const T* kb = k + b * len * dim;
    const T* vb = v + b * len * dim;
    for (Index i = 0; i < len; ++i) {
      T* p = probs + (b * len + i) * len;
      T mx = -INFINITY;
      for (Index j = 0; j < len; ++j) {
        T s = 0;
        for (Index e = 0; e < dim; ++e) s += qb[i * dim + e] * kb[j * dim + e];
        p[j] = s * scale;
        mx = std::max(mx, p[j]);
      }
      T total = 0;
      for (Index j = 0; j < len; ++j) {
        p[j] = std::exp(p[j] - mx);
        total += p[j];
      }
      for (Index j = 0; j < len; ++j) p[j] /= total;
      T* o = out + (b * len + i) * dim;
      std::fill(o, o + dim, T(0));
      for (Index j = 0; j < len; ++j) {
        const T pj = p[j];
        for (Index e = 0; e < dim; ++e) o[e] += pj * vb[j * dim + e];
      }
    }
  }
}

#define USDIFF_INSTANTIATE(T)                                                                  \
  template void gemm<T>(Index, Index, Index, const T*, const T*, T*, bool);                   \
  template void conv2d_forward<T>(const Conv2dDims&, const T*, const T*, const T*, T*);        \
  template void conv2d_backward_input<T>(const Conv2dDims&, const T*, const T*, T*);           \
  template void conv2d_backward_weight<T>(const Conv2dDims&, const T*, const T*, T*, T*);      \
  template void attention_forward<T>(Index, Index, Index, const T*, const T*, const T*, T*, T*);
USDIFF_INSTANTIATE(float)
USDIFF_INSTANTIATE(double)
#undef USDIFF_INSTANTIATE

}  // namespace usdiff::nn::kernels::parallel
