#include "usdiff/numerics/ops.hpp"

#include <algorithm>
#include <cmath>

#include "usdiff/numerics/kernels.hpp"

namespace usdiff::nn {

namespace {

using Index = std::int64_t;
template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
bool wants_grad(const NodePtr<T>& n) {
  return n && n->requires_grad;
}

template <typename T>
std::vector<T>& grad_of(const NodePtr<T>& n) {
  n->ensure_grad();
  return n->grad;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <typename T>
void require_ndim(const Tensor<T>& x, int n, const char* op, const char* what) {
  if (x.ndim() != n) {
    throw ShapeError(std::string(op) + ": " + what + " must be " + std::to_string(n) +
                     "-d, got " + to_string(x.shape()));
  }
}

// Elementwise unary op with derivative expressed from (x, y).
template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df, const char* name) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = f(v);
  auto xn = x.node();
  return make_result<T>(
      x.shape(), std::move(out), {&x},
      [xn, df](Node<T>& self) {
        auto& g = grad_of(xn);
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] += self.grad[i] * df(xn->data[i], self.data[i]);
        }
      },
      name);
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int padding) {
  require_ndim(x, 4, "conv2d", "input");
  require_ndim(weight, 4, "conv2d", "weight");
  if (x.dim(1) != weight.dim(1)) {
    throw ShapeError("conv2d: input channels " + std::to_string(x.dim(1)) +
                     " do not match weight channels " + std::to_string(weight.dim(1)) +
                     " (input " + to_string(x.shape()) + ", weight " +
                     to_string(weight.shape()) + ")");
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != weight.dim(0))) {
    throw ShapeError("conv2d: bias shape " + to_string(bias.shape()) + " does not match " +
                     std::to_string(weight.dim(0)) + " filters");
  }
  const auto d = kernels::make_conv2d_dims(x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0),
                                           weight.dim(2), weight.dim(3), stride, padding);
  std::vector<T> out(static_cast<std::size_t>(d.n * d.k * d.ho * d.wo));
  kernels::parallel::conv2d_forward(d, x.ptr(), weight.ptr(), bias.defined() ? bias.ptr() : nullptr,
                                    out.data());
  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  return make_result<T>(
      {d.n, d.k, d.ho, d.wo}, std::move(out), {&x, &weight, &bias},
      [xn, wn, bn, d](Node<T>& self) {
        if (wants_grad(xn)) {
          kernels::parallel::conv2d_backward_input(d, wn->data.data(), self.grad.data(),
                                                   grad_of(xn).data());
        }
        const bool gw = wants_grad(wn);
        const bool gb = wants_grad(bn);
        if (gw || gb) {
          if (gw) {
            kernels::parallel::conv2d_backward_weight(d, xn->data.data(), self.grad.data(),
                                                      grad_of(wn).data(),
                                                      gb ? grad_of(bn).data() : nullptr);
          } else {
            auto& g = grad_of(bn);
            const Index plane = d.ho * d.wo;
            for (Index n = 0; n < d.n; ++n)
              for (Index k = 0; k < d.k; ++k) {
                T acc = 0;
                const T* src = self.grad.data() + (n * d.k + k) * plane;
                for (Index p = 0; p < plane; ++p) acc += src[p];
                g[k] += acc;
              }
          }
        }
      },
      "conv2d");
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_ndim(x, 2, "linear", "input");
  require_ndim(weight, 2, "linear", "weight");
  const Index n = x.dim(0), din = x.dim(1), dout = weight.dim(1);
  if (weight.dim(0) != din) {
    throw ShapeError("linear: inner dimensions differ, input " + to_string(x.shape()) +
                     " vs weight " + to_string(weight.shape()));
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != dout)) {
    throw ShapeError("linear: bias shape " + to_string(bias.shape()) + " does not match " +
                     std::to_string(dout) + " outputs");
  }
  std::vector<T> out(static_cast<std::size_t>(n * dout));
  kernels::parallel::gemm(n, dout, din, x.ptr(), weight.ptr(), out.data(), false);
  if (bias.defined()) {
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < dout; ++j) out[i * dout + j] += bias.data()[j];
  }
  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  return make_result<T>(
      {n, dout}, std::move(out), {&x, &weight, &bias},
      [xn, wn, bn, n, din, dout](Node<T>& self) {
        if (wants_grad(xn)) {
          // dx[n,din] += g[n,dout] * w^T[dout,din]
          std::vector<T> wt(static_cast<std::size_t>(din * dout));
          for (Index i = 0; i < din; ++i)
            for (Index j = 0; j < dout; ++j) wt[j * din + i] = wn->data[i * dout + j];
          kernels::parallel::gemm(n, din, dout, self.grad.data(), wt.data(), grad_of(xn).data(),
                                  true);
        }
        if (wants_grad(wn)) {
          // dw[din,dout] += x^T[din,n] * g[n,dout]
          std::vector<T> xt(static_cast<std::size_t>(din * n));
          for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < din; ++j) xt[j * n + i] = xn->data[i * din + j];
          kernels::parallel::gemm(din, dout, n, xt.data(), self.grad.data(), grad_of(wn).data(),
                                  true);
        }
        if (wants_grad(bn)) {
          auto& gb = grad_of(bn);
          for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < dout; ++j) gb[j] += self.grad[i * dout + j];
        }
      },
      "linear");
}

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int groups, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps) {
  require_ndim(x, 4, "group_norm", "input");
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (groups <= 0 || c % groups != 0) {
    throw ShapeError("group_norm: channels " + std::to_string(c) + " not divisible by groups " +
                     std::to_string(groups));
  }
  if (gamma.numel() != c || beta.numel() != c) {
    throw ShapeError("group_norm: gamma/beta must have " + std::to_string(c) + " elements");
  }
  const Index cpg = c / groups;
  const Index m = cpg * hw;
  std::vector<T> xhat(x.data().begin(), x.data().end());
  std::vector<T> inv_std(static_cast<std::size_t>(n * groups));
  std::vector<T> out(xhat.size());
  const T* xd = x.ptr();
  const T* gd = gamma.ptr();
  const T* bd = beta.ptr();
#pragma omp parallel for schedule(static)
  for (Index ng = 0; ng < n * groups; ++ng) {
    const Index base = ng * m;
    double s = 0;
    for (Index i = 0; i < m; ++i) s += xd[base + i];
    const double mu = s / static_cast<double>(m);
    double v = 0;
    for (Index i = 0; i < m; ++i) {
      const double dv = xd[base + i] - mu;
      v += dv * dv;
    }
    v /= static_cast<double>(m);
    const T is = static_cast<T>(1.0 / std::sqrt(v + static_cast<double>(eps)));
    inv_std[ng] = is;
    const Index g = ng % groups;
    for (Index i = 0; i < m; ++i) {
      const Index ch = g * cpg + i / hw;
      const T xh = static_cast<T>(xd[base + i] - mu) * is;
      xhat[base + i] = xh;
      out[base + i] = xh * gd[ch] + bd[ch];
    }
  }
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return make_result<T>(
      x.shape(), std::move(out), {&x, &gamma, &beta},
      [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), n, c, hw, groups, cpg,
       m](Node<T>& self) {
        const T* g = self.grad.data();
        if (wants_grad(gn) || wants_grad(bn)) {
          auto* dg = wants_grad(gn) ? grad_of(gn).data() : nullptr;
          auto* db = wants_grad(bn) ? grad_of(bn).data() : nullptr;
          for (Index b = 0; b < n; ++b)
            for (Index ch = 0; ch < c; ++ch) {
              T sg = 0, sb = 0;
              const Index off = (b * c + ch) * hw;
              for (Index i = 0; i < hw; ++i) {
                sg += g[off + i] * xhat[off + i];
                sb += g[off + i];
              }
              if (dg) dg[ch] += sg;
              if (db) db[ch] += sb;
            }
        }
        if (wants_grad(xn)) {
          auto& dx = grad_of(xn);
          const T* gam = gn->data.data();
#pragma omp parallel for schedule(static)
          for (Index ng = 0; ng < n * groups; ++ng) {
            const Index base = ng * m;
            const Index grp = ng % groups;
            double mean_d = 0, mean_dx = 0;
            for (Index i = 0; i < m; ++i) {
              const double dxh = static_cast<double>(g[base + i]) * gam[grp * cpg + i / hw];
              mean_d += dxh;
              mean_dx += dxh * xhat[base + i];
            }
            mean_d /= static_cast<double>(m);
            mean_dx /= static_cast<double>(m);
            const T is = inv_std[ng];
            for (Index i = 0; i < m; ++i) {
              const double dxh = static_cast<double>(g[base + i]) * gam[grp * cpg + i / hw];
              dx[base + i] += static_cast<T>(is * (dxh - mean_d - xhat[base + i] * mean_dx));
            }
          }
        }
      },
      "group_norm");
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return v / (T(1) + std::exp(-v)); },
      [](T v, T) {
        const T s = T(1) / (T(1) + std::exp(-v));
        return s * (T(1) + v * (T(1) - s));
      },
      "silu");
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; }, "tanh");
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; }, "exp");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary(
      x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; }, "scale");
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return unary(
      x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v > lo && v < hi) ? T(1) : T(0); }, "clamp");
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int nd = x.ndim();
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) throw ShapeError("softmax: axis out of range");
  Index outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.shape()[i];
  for (int i = axis + 1; i < nd; ++i) inner *= x.shape()[i];
  const Index len = x.shape()[axis];
  std::vector<T> out(x.data().begin(), x.data().end());
  for (Index o = 0; o < outer; ++o)
    for (Index in = 0; in < inner; ++in) {
      const Index base = o * len * inner + in;
      T mx = -INFINITY;
      for (Index j = 0; j < len; ++j) mx = std::max(mx, out[base + j * inner]);
      T total = 0;
      for (Index j = 0; j < len; ++j) {
        out[base + j * inner] = std::exp(out[base + j * inner] - mx);
        total += out[base + j * inner];
      }
      for (Index j = 0; j < len; ++j) out[base + j * inner] /= total;
    }
  auto xn = x.node();
  return make_result<T>(
      x.shape(), std::move(out), {&x},
      [xn, outer, inner, len](Node<T>& self) {
        auto& g = grad_of(xn);
        for (Index o = 0; o < outer; ++o)
          for (Index in = 0; in < inner; ++in) {
            const Index base = o * len * inner + in;
            T dot = 0;
            for (Index j = 0; j < len; ++j)
              dot += self.grad[base + j * inner] * self.data[base + j * inner];
            for (Index j = 0; j < len; ++j) {
              const Index idx = base + j * inner;
              g[idx] += self.data[idx] * (self.grad[idx] - dot);
            }
          }
      },
      "softmax");
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  auto an = a.node(), bn = b.node();
  return make_result<T>(
      a.shape(), std::move(out), {&a, &b},
      [an, bn](Node<T>& self) {
        if (wants_grad(an)) {
          auto& g = grad_of(an);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants_grad(bn)) {
          auto& g = grad_of(bn);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
      },
      "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
  auto an = a.node(), bn = b.node();
  return make_result<T>(
      a.shape(), std::move(out), {&a, &b},
      [an, bn](Node<T>& self) {
        if (wants_grad(an)) {
          auto& g = grad_of(an);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants_grad(bn)) {
          auto& g = grad_of(bn);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
      },
      "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  auto an = a.node(), bn = b.node();
  return make_result<T>(
      a.shape(), std::move(out), {&a, &b},
      [an, bn](Node<T>& self) {
        if (wants_grad(an)) {
          auto& g = grad_of(an);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->data[i];
        }
        if (wants_grad(bn)) {
          auto& g = grad_of(bn);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->data[i];
        }
      },
      "mul");
}

template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& b) {
  require_ndim(x, 4, "add_channel_bias", "input");
  require_ndim(b, 2, "add_channel_bias", "bias");
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (b.dim(0) != n || b.dim(1) != c) {
    throw ShapeError("add_channel_bias: bias " + to_string(b.shape()) + " does not match input " +
                     to_string(x.shape()));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  for (Index i = 0; i < n * c; ++i)
    for (Index p = 0; p < hw; ++p) out[i * hw + p] += b.data()[i];
  auto xn = x.node(), bn = b.node();
  return make_result<T>(
      x.shape(), std::move(out), {&x, &b},
      [xn, bn, n, c, hw](Node<T>& self) {
        if (wants_grad(xn)) {
          auto& g = grad_of(xn);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants_grad(bn)) {
          auto& g = grad_of(bn);
          for (Index i = 0; i < n * c; ++i) {
            T acc = 0;
            for (Index p = 0; p < hw; ++p) acc += self.grad[i * hw + p];
            g[i] += acc;
          }
        }
      },
      "add_channel_bias");
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_ndim(a, 4, "concat_channels", "first input");
  require_ndim(b, 4, "concat_channels", "second input");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const Index n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  std::vector<T> out(static_cast<std::size_t>(n * (ca + cb) * hw));
  for (Index i = 0; i < n; ++i) {
    std::copy_n(a.ptr() + i * ca * hw, ca * hw, out.data() + i * (ca + cb) * hw);
    std::copy_n(b.ptr() + i * cb * hw, cb * hw, out.data() + (i * (ca + cb) + ca) * hw);
  }
  auto an = a.node(), bn = b.node();
  return make_result<T>(
      {n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {&a, &b},
      [an, bn, n, ca, cb, hw](Node<T>& self) {
        for (Index i = 0; i < n; ++i) {
          const T* src = self.grad.data() + i * (ca + cb) * hw;
          if (wants_grad(an)) {
            T* dst = grad_of(an).data() + i * ca * hw;
            for (Index p = 0; p < ca * hw; ++p) dst[p] += src[p];
          }
          if (wants_grad(bn)) {
            T* dst = grad_of(bn).data() + i * cb * hw;
            for (Index p = 0; p < cb * hw; ++p) dst[p] += src[ca * hw + p];
          }
        }
      },
      "concat_channels");
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, Index begin, Index end) {
  require_ndim(x, 4, "slice_channels", "input");
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (begin < 0 || end > c || begin >= end) {
    throw ShapeError("slice_channels: invalid range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") for " + std::to_string(c) + " channels");
  }
  const Index cs = end - begin;
  std::vector<T> out(static_cast<std::size_t>(n * cs * hw));
  for (Index i = 0; i < n; ++i)
    std::copy_n(x.ptr() + (i * c + begin) * hw, cs * hw, out.data() + i * cs * hw);
  auto xn = x.node();
  return make_result<T>(
      {n, cs, x.dim(2), x.dim(3)}, std::move(out), {&x},
      [xn, n, c, hw, begin, cs](Node<T>& self) {
        auto& g = grad_of(xn);
        for (Index i = 0; i < n; ++i)
          for (Index p = 0; p < cs * hw; ++p) g[(i * c + begin) * hw + p] += self.grad[i * cs * hw + p];
      },
      "slice_channels");
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  require_ndim(x, 4, "upsample_nearest2x", "input");
  const Index nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<T> out(static_cast<std::size_t>(nc * 4 * h * w));
  for (Index i = 0; i < nc; ++i)
    for (Index y = 0; y < 2 * h; ++y)
      for (Index xx = 0; xx < 2 * w; ++xx)
        out[(i * 2 * h + y) * 2 * w + xx] = x.data()[(i * h + y / 2) * w + xx / 2];
  auto xn = x.node();
  return make_result<T>(
      {x.dim(0), x.dim(1), 2 * h, 2 * w}, std::move(out), {&x},
      [xn, nc, h, w](Node<T>& self) {
        auto& g = grad_of(xn);
        for (Index i = 0; i < nc; ++i)
          for (Index y = 0; y < 2 * h; ++y)
            for (Index xx = 0; xx < 2 * w; ++xx)
              g[(i * h + y / 2) * w + xx / 2] += self.grad[(i * 2 * h + y) * 2 * w + xx];
      },
      "upsample_nearest2x");
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_ndim(x, 4, "global_avg_pool", "input");
  const Index nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(static_cast<std::size_t>(nc));
  for (Index i = 0; i < nc; ++i) {
    T acc = 0;
    for (Index p = 0; p < hw; ++p) acc += x.data()[i * hw + p];
    out[i] = acc / static_cast<T>(hw);
  }
  auto xn = x.node();
  return make_result<T>(
      {x.dim(0), x.dim(1)}, std::move(out), {&x},
      [xn, nc, hw](Node<T>& self) {
        auto& g = grad_of(xn);
        for (Index i = 0; i < nc; ++i) {
          const T v = self.grad[i] / static_cast<T>(hw);
          for (Index p = 0; p < hw; ++p) g[i * hw + p] += v;
        }
      },
      "global_avg_pool");
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (nn::numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  auto xn = x.node();
  return make_result<T>(
      std::move(shape), std::move(out), {&x},
      [xn](Node<T>& self) {
        auto& g = grad_of(xn);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      },
      "reshape");
}

template <typename T>
Tensor<T> nchw_to_tokens(const Tensor<T>& x) {
  require_ndim(x, 4, "nchw_to_tokens", "input");
  const Index n = x.dim(0), c = x.dim(1), l = x.dim(2) * x.dim(3);
  std::vector<T> out(static_cast<std::size_t>(n * l * c));
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch)
      for (Index p = 0; p < l; ++p) out[(b * l + p) * c + ch] = x.data()[(b * c + ch) * l + p];
  auto xn = x.node();
  return make_result<T>(
      {n, l, c}, std::move(out), {&x},
      [xn, n, c, l](Node<T>& self) {
        auto& g = grad_of(xn);
        for (Index b = 0; b < n; ++b)
          for (Index ch = 0; ch < c; ++ch)
            for (Index p = 0; p < l; ++p) g[(b * c + ch) * l + p] += self.grad[(b * l + p) * c + ch];
      },
      "nchw_to_tokens");
}

template <typename T>
Tensor<T> tokens_to_nchw(const Tensor<T>& x, Index height, Index width) {
  require_ndim(x, 3, "tokens_to_nchw", "input");
  const Index n = x.dim(0), l = x.dim(1), c = x.dim(2);
  if (height * width != l) {
    throw ShapeError("tokens_to_nchw: " + std::to_string(l) + " tokens cannot form " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  std::vector<T> out(static_cast<std::size_t>(n * l * c));
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch)
      for (Index p = 0; p < l; ++p) out[(b * c + ch) * l + p] = x.data()[(b * l + p) * c + ch];
  auto xn = x.node();
  return make_result<T>(
      {n, c, height, width}, std::move(out), {&x},
      [xn, n, c, l](Node<T>& self) {
        auto& g = grad_of(xn);
        for (Index b = 0; b < n; ++b)
          for (Index ch = 0; ch < c; ++ch)
            for (Index p = 0; p < l; ++p) g[(b * l + p) * c + ch] += self.grad[(b * c + ch) * l + p];
      },
      "tokens_to_nchw");
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const int> ids) {
  require_ndim(table, 2, "gather_rows", "table");
  const Index rows = table.dim(0), d = table.dim(1);
  const auto n = static_cast<Index>(ids.size());
  if (n == 0) throw ShapeError("gather_rows: empty id list");
  std::vector<T> out(static_cast<std::size_t>(n * d));
  for (Index i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= rows) {
      throw ShapeError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(rows) + " rows");
    }
    std::copy_n(table.ptr() + ids[i] * d, d, out.data() + i * d);
  }
  auto tn = table.node();
  std::vector<int> idv(ids.begin(), ids.end());
  return make_result<T>(
      {n, d}, std::move(out), {&table},
      [tn, idv = std::move(idv), d](Node<T>& self) {
        auto& g = grad_of(tn);
        for (std::size_t i = 0; i < idv.size(); ++i)
          for (Index j = 0; j < d; ++j) g[idv[i] * d + j] += self.grad[i * d + j];
      },
      "gather_rows");
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0;
  for (const T v : x.data()) acc += v;
  auto xn = x.node();
  return make_result<T>(
      {1}, {static_cast<T>(acc)}, {&x},
      [xn](Node<T>& self) {
        auto& g = grad_of(xn);
        for (auto& v : g) v += self.grad[0];
      },
      "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mse_loss");
  const auto count = static_cast<double>(a.numel());
  double acc = 0;
  for (Index i = 0; i < a.numel(); ++i) {
    const double dv = static_cast<double>(a.data()[i]) - b.data()[i];
    acc += dv * dv;
  }
  auto an = a.node(), bn = b.node();
  return make_result<T>(
      {1}, {static_cast<T>(acc / count)}, {&a, &b},
      [an, bn, count](Node<T>& self) {
        const T k = static_cast<T>(2.0 / count) * self.grad[0];
        const std::size_t len = an->data.size();
        if (wants_grad(an)) {
          auto& g = grad_of(an);
          for (std::size_t i = 0; i < len; ++i) g[i] += k * (an->data[i] - bn->data[i]);
        }
        if (wants_grad(bn)) {
          auto& g = grad_of(bn);
          for (std::size_t i = 0; i < len; ++i) g[i] -= k * (an->data[i] - bn->data[i]);
        }
      },
      "mse_loss");
}

template <typename T>
Tensor<T> kl_normal(const Tensor<T>& mu, const Tensor<T>& logvar) {
  require_same_shape(mu, logvar, "kl_normal");
  const auto count = static_cast<double>(mu.numel());
  double acc = 0;
  for (Index i = 0; i < mu.numel(); ++i) {
    const double m = mu.data()[i], lv = logvar.data()[i];
    acc += m * m + std::exp(lv) - 1.0 - lv;
  }
  auto mn = mu.node(), ln = logvar.node();
  return make_result<T>(
      {1}, {static_cast<T>(0.5 * acc / count)}, {&mu, &logvar},
      [mn, ln, count](Node<T>& self) {
        const T k = static_cast<T>(1.0 / count) * self.grad[0];
        if (wants_grad(mn)) {
          auto& g = grad_of(mn);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * mn->data[i];
        }
        if (wants_grad(ln)) {
          auto& g = grad_of(ln);
          for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += k * T(0.5) * (std::exp(ln->data[i]) - T(1));
        }
      },
      "kl_normal");
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_ndim(logits, 2, "cross_entropy", "logits");
  const Index n = logits.dim(0), k = logits.dim(1);
  if (static_cast<Index>(labels.size()) != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  std::vector<T> probs(logits.data().begin(), logits.data().end());
  double loss = 0;
  for (Index i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= k) throw ShapeError("cross_entropy: label out of range");
    T* row = probs.data() + i * k;
    const T mx = *std::max_element(row, row + k);
    double total = 0;
    for (Index j = 0; j < k; ++j) total += std::exp(static_cast<double>(row[j] - mx));
    const double lse = std::log(total) + mx;
    loss += lse - row[labels[i]];
    for (Index j = 0; j < k; ++j) row[j] = static_cast<T>(std::exp(row[j] - lse));
  }
  auto ln = logits.node();
  std::vector<int> lab(labels.begin(), labels.end());
  return make_result<T>(
      {1}, {static_cast<T>(loss / static_cast<double>(n))}, {&logits},
      [ln, probs = std::move(probs), lab = std::move(lab), n, k](Node<T>& self) {
        auto& g = grad_of(ln);
        const T s = self.grad[0] / static_cast<T>(n);
        for (Index i = 0; i < n; ++i)
          for (Index j = 0; j < k; ++j)
            g[i * k + j] += s * (probs[i * k + j] - (j == lab[i] ? T(1) : T(0)));
      },
      "cross_entropy");
}

template <typename T>
Tensor<T> attention_single_head(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  require_ndim(q, 3, "attention", "q");
  require_same_shape(q, k, "attention(q,k)");
  require_same_shape(q, v, "attention(q,v)");
  const Index n = q.dim(0), len = q.dim(1), dim = q.dim(2);
  std::vector<T> out(static_cast<std::size_t>(n * len * dim));
  std::vector<T> probs(static_cast<std::size_t>(n * len * len));
  kernels::parallel::attention_forward(n, len, dim, q.ptr(), k.ptr(), v.ptr(), out.data(),
                                       probs.data());
  auto qn = q.node(), kn = k.node(), vn = v.node();
  return make_result<T>(
      q.shape(), std::move(out), {&q, &k, &v},
      [qn, kn, vn, probs = std::move(probs), n, len, dim](Node<T>& self) {
        const T sc = T(1) / std::sqrt(static_cast<T>(dim));
        std::vector<T> dp(static_cast<std::size_t>(len * len));
        for (Index b = 0; b < n; ++b) {
          const T* p = probs.data() + b * len * len;
          const T* go = self.grad.data() + b * len * dim;
          const T* qb = qn->data.data() + b * len * dim;
          const T* kb = kn->data.data() + b * len * dim;
          const T* vb = vn->data.data() + b * len * dim;
          if (wants_grad(vn)) {
            T* gv = grad_of(vn).data() + b * len * dim;
            for (Index i = 0; i < len; ++i)
              for (Index j = 0; j < len; ++j)
                for (Index e = 0; e < dim; ++e) gv[j * dim + e] += p[i * len + j] * go[i * dim + e];
          }
          // dS = P .* (dP - rowsum(dP .* P)), dP = dO v^T
          for (Index i = 0; i < len; ++i) {
            T dot = 0;
            for (Index j = 0; j < len; ++j) {
              T acc = 0;
              for (Index e = 0; e < dim; ++e) acc += go[i * dim + e] * vb[j * dim + e];
              dp[i * len + j] = acc;
              dot += acc * p[i * len + j];
            }
            for (Index j = 0; j < len; ++j) dp[i * len + j] = p[i * len + j] * (dp[i * len + j] - dot) * sc;
          }
          if (wants_grad(qn)) {
            T* gq = grad_of(qn).data() + b * len * dim;
            for (Index i = 0; i < len; ++i)
              for (Index j = 0; j < len; ++j)
                for (Index e = 0; e < dim; ++e) gq[i * dim + e] += dp[i * len + j] * kb[j * dim + e];
          }
          if (wants_grad(kn)) {
            T* gk = grad_of(kn).data() + b * len * dim;
            for (Index i = 0; i < len; ++i)
              for (Index j = 0; j < len; ++j)
                for (Index e = 0; e < dim; ++e) gk[j * dim + e] += dp[i * len + j] * qb[i * dim + e];
          }
        }
      },
      "attention_single_head");
}

#define USDIFF_INSTANTIATE(T)                                                                   \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);   \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> group_norm(const Tensor<T>&, int, const Tensor<T>&, const Tensor<T>&, T); \
  template Tensor<T> silu(const Tensor<T>&);                                                   \
  template Tensor<T> tanh(const Tensor<T>&);                                                   \
  template Tensor<T> exp(const Tensor<T>&);                                                    \
  template Tensor<T> softmax(const Tensor<T>&, int);                                           \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                            \
  template Tensor<T> add_channel_bias(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> slice_channels(const Tensor<T>&, Index, Index);                           \
  template Tensor<T> upsample_nearest2x(const Tensor<T>&);                                     \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                        \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> nchw_to_tokens(const Tensor<T>&);                                         \
  template Tensor<T> tokens_to_nchw(const Tensor<T>&, Index, Index);                           \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const int>);                      \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> mean(const Tensor<T>&);                                                   \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> kl_normal(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);                    \
  template Tensor<T> attention_single_head(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);
USDIFF_INSTANTIATE(float)
USDIFF_INSTANTIATE(double)
#undef USDIFF_INSTANTIATE

}  // namespace usdiff::nn
