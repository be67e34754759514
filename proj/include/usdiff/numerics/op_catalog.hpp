#pragma once

// Every differentiable op wrapped as a scalar loss over random fp64 leaves.
// Used by `usdiff verify`, the unit tests and the acceptance suite.

#include <functional>
#include <string>
#include <vector>

#include "usdiff/numerics/grad_check.hpp"
#include "usdiff/numerics/ops.hpp"
#include "usdiff/numerics/rng.hpp"

namespace usdiff::nn {

using TensorD = Tensor<double>;

struct OpCase {
  std::string name;
  std::function<TensorD()> loss;
  std::vector<TensorD> inputs;
};

inline TensorD rand_leaf(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(shape), true);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline std::vector<OpCase> op_catalog(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<OpCase> cases;
  auto add_case = [&](std::string name, std::vector<TensorD> inputs,
                      std::function<TensorD(const std::vector<TensorD>&)> body) {
    auto in = inputs;
    cases.push_back({std::move(name), [in, body] { return body(in); }, std::move(inputs)});
  };
  auto proj = [&](Shape shape) {
    TensorD w(std::move(shape));
    for (auto& v : w.data()) v = rng.uniform(-1, 1);
    return w;
  };

  {
    auto x = rand_leaf(rng, {2, 2, 5, 5}), w = rand_leaf(rng, {3, 2, 3, 3}), b = rand_leaf(rng, {3});
    auto p = proj({2, 3, 5, 5});
    add_case("conv2d", {x, w, b}, [p](const auto& v) {
      return sum(mul(conv2d(v[0], v[1], v[2], 1, 1), p));
    });
  }
  {
    auto x = rand_leaf(rng, {1, 2, 6, 6}), w = rand_leaf(rng, {2, 2, 3, 3}), b = rand_leaf(rng, {2});
    auto p = proj({1, 2, 3, 3});
    add_case("conv2d_stride2", {x, w, b}, [p](const auto& v) {
      return sum(mul(conv2d(v[0], v[1], v[2], 2, 1), p));
    });
  }
  {
    auto x = rand_leaf(rng, {3, 4}), w = rand_leaf(rng, {4, 5}), b = rand_leaf(rng, {5});
    auto p = proj({3, 5});
    add_case("linear", {x, w, b},
             [p](const auto& v) { return sum(mul(linear(v[0], v[1], v[2]), p)); });
  }
  {
    auto x = rand_leaf(rng, {2, 4, 3, 3}), g = rand_leaf(rng, {4}, 0.5, 1.5), b = rand_leaf(rng, {4});
    auto p = proj({2, 4, 3, 3});
    add_case("group_norm", {x, g, b}, [p](const auto& v) {
      return sum(mul(group_norm(v[0], 2, v[1], v[2]), p));
    });
  }
  {
    auto x = rand_leaf(rng, {2, 3, 2, 2}, -3, 3);
    auto p = proj({2, 3, 2, 2});
    add_case("silu", {x}, [p](const auto& v) { return sum(mul(silu(v[0]), p)); });
    add_case("tanh", {x}, [p](const auto& v) { return sum(mul(tanh(v[0]), p)); });
    add_case("exp", {x}, [p](const auto& v) { return sum(mul(exp(v[0]), p)); });
    add_case("scale", {x},
             [p](const auto& v) { return sum(mul(scale(v[0], 0.37), p)); });
    add_case("upsample_nearest2x", {x}, [](const auto& v) {
      return sum(mul(upsample_nearest2x(v[0]), upsample_nearest2x(v[0])));
    });
    add_case("global_avg_pool", {x}, [](const auto& v) {
      auto y = global_avg_pool(v[0]);
      return sum(mul(y, y));
    });
    add_case("slice_channels", {x}, [](const auto& v) {
      auto y = slice_channels(v[0], 1, 3);
      return sum(mul(y, y));
    });
    add_case("nchw_tokens_roundtrip", {x}, [p](const auto& v) {
      auto t = nchw_to_tokens(v[0]);
      auto back = tokens_to_nchw(mul(t, t), 2, 2);
      return sum(mul(back, p));
    });
    add_case("reshape", {x}, [p](const auto& v) {
      auto y = reshape(v[0], {6, 4});
      return sum(mul(reshape(mul(y, y), {2, 3, 2, 2}), p));
    });
  }
  {
    // clamp: keep inputs away from the kinks at +-0.5
    TensorD x({2, 8}, true);
    for (std::size_t i = 0; i < 16; ++i) {
      const double mag = rng.uniform(0.0, 0.4) + (i % 2 ? 0.6 : 0.0);
      x.data()[i] = (i % 4 < 2 ? mag : -mag);
    }
    auto p = proj({2, 8});
    add_case("clamp", {x},
             [p](const auto& v) { return sum(mul(clamp(v[0], -0.5, 0.5), p)); });
  }
  {
    auto x = rand_leaf(rng, {2, 3, 4});
    auto p = proj({2, 3, 4});
    add_case("softmax_last", {x},
             [p](const auto& v) { return sum(mul(softmax(v[0], -1), p)); });
    add_case("softmax_mid", {x},
             [p](const auto& v) { return sum(mul(softmax(v[0], 1), p)); });
  }
  {
    auto a = rand_leaf(rng, {3, 4}), b = rand_leaf(rng, {3, 4});
    auto p = proj({3, 4});
    add_case("add", {a, b}, [p](const auto& v) { return sum(mul(add(v[0], v[1]), p)); });
    add_case("sub", {a, b}, [p](const auto& v) { return sum(mul(sub(v[0], v[1]), p)); });
    add_case("mul", {a, b}, [p](const auto& v) { return sum(mul(mul(v[0], v[1]), p)); });
    add_case("mse_loss", {a, b}, [](const auto& v) { return mse_loss(v[0], v[1]); });
    add_case("kl_normal", {a, b}, [](const auto& v) { return kl_normal(v[0], v[1]); });
    add_case("mean", {a}, [](const auto& v) { return mean(mul(v[0], v[0])); });
  }
  {
    auto x = rand_leaf(rng, {2, 3, 2, 2}), b = rand_leaf(rng, {2, 3});
    auto p = proj({2, 3, 2, 2});
    add_case("add_channel_bias", {x, b}, [p](const auto& v) {
      return sum(mul(add_channel_bias(v[0], v[1]), p));
    });
    auto y = rand_leaf(rng, {2, 2, 2, 2});
    auto pc = proj({2, 5, 2, 2});
    add_case("concat_channels", {x, y}, [pc](const auto& v) {
      return sum(mul(concat_channels(v[0], v[1]), pc));
    });
  }
  {
    auto table = rand_leaf(rng, {4, 3});
    auto p = proj({3, 3});
    add_case("gather_rows", {table}, [p](const auto& v) {
      const int ids[] = {2, 0, 2};
      return sum(mul(gather_rows(v[0], ids), p));
    });
  }
  {
    auto logits = rand_leaf(rng, {4, 3}, -2, 2);
    add_case("cross_entropy", {logits}, [](const auto& v) {
      const int labels[] = {0, 2, 1, 2};
      return cross_entropy(v[0], labels);
    });
  }
  {
    auto q = rand_leaf(rng, {2, 3, 4}), k = rand_leaf(rng, {2, 3, 4}), v = rand_leaf(rng, {2, 3, 4});
    auto p = proj({2, 3, 4});
    add_case("attention_single_head", {q, k, v}, [p](const auto& in) {
      return sum(mul(attention_single_head(in[0], in[1], in[2]), p));
    });
  }
  return cases;
}

}  // namespace usdiff::nn
