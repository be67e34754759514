#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "usdiff/numerics/adam.hpp"
#include "usdiff/numerics/grad_check.hpp"
#include "usdiff/numerics/kernels.hpp"
#include "usdiff/numerics/op_catalog.hpp"
#include "usdiff/numerics/ops.hpp"
#include "usdiff/numerics/parameter.hpp"
#include "usdiff/numerics/rng.hpp"

namespace nn = usdiff::nn;
using usdiff::Rng;
using TensorF = nn::Tensor<float>;
using TensorD = nn::Tensor<double>;

namespace {

template <typename T>
nn::Tensor<T> random_tensor(Rng& rng, nn::Shape shape) {
  nn::Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-1, 1));
  return t;
}

// Test-local oracles, written independently of the library kernels.
std::vector<double> conv_oracle(const TensorF& x, const TensorF& w, const TensorF& b, int stride,
                                int pad) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto k = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const auto ho = (h + 2 * pad - kh) / stride + 1, wo = (wd + 2 * pad - kw) / stride + 1;
  std::vector<double> out;
  for (int ni = 0; ni < n; ++ni)
    for (int ki = 0; ki < k; ++ki)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = b.data()[ki];
          for (int ci = 0; ci < c; ++ci)
            for (int dy = 0; dy < kh; ++dy)
              for (int dx = 0; dx < kw; ++dx) {
                const int iy = oy * stride + dy - pad, ix = ox * stride + dx - pad;
                if (iy >= 0 && iy < h && ix >= 0 && ix < wd)
                  acc += double(x.data()[((ni * c + ci) * h + iy) * wd + ix]) *
                         w.data()[((ki * c + ci) * kh + dy) * kw + dx];
              }
          out.push_back(acc);
        }
  return out;
}

}  // namespace

TEST(Conv2d, SumOfOnes) {
  // 3x3 window over a padded 2x2 input covers all four pixels at every output.
  auto y = nn::conv2d(TensorF::full({1, 1, 2, 2}, 1.0f), TensorF::full({1, 1, 3, 3}, 1.0f),
                      TensorF::zeros({1}), 1, 1);
  ASSERT_EQ(y.shape(), (nn::Shape{1, 1, 2, 2}));
  for (float v : y.data()) EXPECT_EQ(v, 4.0f);
}

TEST(Conv2d, IdentityKernel) {
  Rng rng(3);
  auto x = random_tensor<float>(rng, {2, 1, 4, 5});
  auto y = nn::conv2d(x, TensorF::full({1, 1, 1, 1}, 1.0f), TensorF::zeros({1}), 1, 0);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2d, MatchesLoopOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    auto x = random_tensor<float>(rng, {1, 2, 5, 5});
    auto w = random_tensor<float>(rng, {3, 2, 3, 3});
    auto b = random_tensor<float>(rng, {3});
    auto y = nn::conv2d(x, w, b, 1, 1);
    auto expected = conv_oracle(x, w, b, 1, 1);
    ASSERT_EQ(y.numel(), static_cast<std::int64_t>(expected.size()));
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(y.data()[i], expected[i], 1e-6);
  }
}

TEST(Conv2d, StrideTwoFloorsOutputSize) {
  Rng rng(8);
  auto x = random_tensor<float>(rng, {2, 3, 8, 8});
  auto w = random_tensor<float>(rng, {4, 3, 3, 3});
  auto b = random_tensor<float>(rng, {4});
  auto y = nn::conv2d(x, w, b, 2, 1);
  ASSERT_EQ(y.shape(), (nn::Shape{2, 4, 4, 4}));
  auto expected = conv_oracle(x, w, b, 2, 1);
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(y.data()[i], expected[i], 1e-6);
}

TEST(Conv2d, ShapeErrorsAreDescriptive) {
  TensorF x({1, 2, 4, 4});
  TensorF w({3, 5, 3, 3});
  try {
    nn::conv2d(x, w, TensorF{}, 1, 1);
    FAIL() << "expected ShapeError";
  } catch (const nn::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channels"), std::string::npos);
  }
  EXPECT_THROW(nn::conv2d(x, TensorF({3, 2, 2, 2}), TensorF{}, 1, 0), nn::ShapeError);
}

TEST(Linear, IdentityAndHandArithmetic) {
  TensorF x({1, 2}, {1.0f, 2.0f});
  TensorF eye({2, 2}, {1, 0, 0, 1});
  auto y = nn::linear(x, eye, TensorF({2}, {3.0f, 4.0f}));
  EXPECT_EQ(y.data()[0], 4.0f);
  EXPECT_EQ(y.data()[1], 6.0f);
  auto same = nn::linear(x, eye, TensorF::zeros({2}));
  EXPECT_EQ(same.data()[0], 1.0f);
  EXPECT_EQ(same.data()[1], 2.0f);
}

TEST(Linear, MatchesTripleLoop) {
  Rng rng(11);
  auto x = random_tensor<float>(rng, {4, 8});
  auto w = random_tensor<float>(rng, {8, 3});
  auto b = random_tensor<float>(rng, {3});
  auto y = nn::linear(x, w, b);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = b.data()[j];
      for (int k = 0; k < 8; ++k) acc += double(x.data()[i * 8 + k]) * w.data()[k * 3 + j];
      EXPECT_NEAR(y.data()[i * 3 + j], acc, 1e-6);
    }
  EXPECT_THROW(nn::linear(x, TensorF({7, 3}), b), nn::ShapeError);
}

TEST(GroupNorm, ConstantInputGivesZeros) {
  auto x = TensorF::full({2, 4, 3, 3}, 2.5f);
  auto y = nn::group_norm(x, 2, TensorF::full({4}, 1.0f), TensorF::zeros({4}));
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(GroupNorm, ZeroGammaGivesBeta) {
  Rng rng(1);
  auto x = random_tensor<float>(rng, {1, 4, 2, 2});
  auto y = nn::group_norm(x, 4, TensorF::zeros({4}), TensorF::full({4}, 0.75f));
  for (float v : y.data()) EXPECT_EQ(v, 0.75f);
}

TEST(GroupNorm, GroupStatisticsByDirectSummation) {
  Rng rng(5);
  auto x = random_tensor<float>(rng, {2, 4, 5, 5});
  auto y = nn::group_norm(x, 2, TensorF::full({4}, 1.0f), TensorF::zeros({4}));
  const int m = 2 * 25;
  for (int g = 0; g < 4; ++g) {
    double s = 0, s2 = 0;
    for (int i = 0; i < m; ++i) s += y.data()[g * m + i];
    const double mu = s / m;
    for (int i = 0; i < m; ++i) s2 += (y.data()[g * m + i] - mu) * (y.data()[g * m + i] - mu);
    EXPECT_LE(std::abs(mu), 1e-5);
    EXPECT_NEAR(s2 / m, 1.0, 1e-3);
  }
  EXPECT_THROW(nn::group_norm(x, 3, TensorF::zeros({4}), TensorF::zeros({4})), nn::ShapeError);
}

TEST(Elementwise, TrivialValues) {
  EXPECT_EQ(nn::silu(TensorF::zeros({1})).item(), 0.0f);
  auto sm = nn::softmax(TensorF::full({2, 4}, 3.0f), 1);
  for (float v : sm.data()) EXPECT_FLOAT_EQ(v, 0.25f);
  Rng rng(2);
  auto a = random_tensor<float>(rng, {3, 3});
  EXPECT_EQ(nn::mse_loss(a, a).item(), 0.0f);
  EXPECT_EQ(nn::kl_normal(TensorF::zeros({4}), TensorF::zeros({4})).item(), 0.0f);
  EXPECT_FLOAT_EQ(nn::mse_loss(TensorF({2}, {0, 0}), TensorF({2}, {2, 0})).item(), 2.0f);
  EXPECT_THROW(nn::mse_loss(TensorF({2}), TensorF({3})), nn::ShapeError);
}

TEST(Elementwise, KlOfUnitMeanIsHalfPerElement) {
  // 0.5 * (1^2 + e^0 - 1 - 0) = 0.5
  auto kl = nn::kl_normal(TensorF::full({3, 2}, 1.0f), TensorF::zeros({3, 2}));
  EXPECT_FLOAT_EQ(kl.item(), 0.5f);
}

TEST(Attention, SingleTokenReturnsValue) {
  Rng rng(4);
  auto q = random_tensor<float>(rng, {2, 1, 3});
  auto k = random_tensor<float>(rng, {2, 1, 3});
  auto v = random_tensor<float>(rng, {2, 1, 3});
  auto o = nn::attention_single_head(q, k, v);
  for (std::int64_t i = 0; i < v.numel(); ++i) EXPECT_EQ(o.data()[i], v.data()[i]);
}

TEST(Attention, IdenticalKeysAverageValues) {
  Rng rng(6);
  auto q = random_tensor<float>(rng, {1, 4, 2});
  TensorF k({1, 4, 2});
  for (int i = 0; i < 4; ++i) {
    k.data()[i * 2] = 0.3f;
    k.data()[i * 2 + 1] = -0.7f;
  }
  auto v = random_tensor<float>(rng, {1, 4, 2});
  auto o = nn::attention_single_head(q, k, v);
  for (int e = 0; e < 2; ++e) {
    double m = 0;
    for (int j = 0; j < 4; ++j) m += v.data()[j * 2 + e];
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(o.data()[i * 2 + e], m / 4, 1e-6);
  }
}

TEST(Attention, MatchesLoopOracle) {
  Rng rng(9);
  auto q = random_tensor<float>(rng, {1, 3, 2});
  auto k = random_tensor<float>(rng, {1, 3, 2});
  auto v = random_tensor<float>(rng, {1, 3, 2});
  auto o = nn::attention_single_head(q, k, v);
  for (int i = 0; i < 3; ++i) {
    double s[3], total = 0;
    for (int j = 0; j < 3; ++j) {
      s[j] = std::exp((double(q.data()[i * 2]) * k.data()[j * 2] +
                       double(q.data()[i * 2 + 1]) * k.data()[j * 2 + 1]) /
                      std::sqrt(2.0));
      total += s[j];
    }
    for (int e = 0; e < 2; ++e) {
      double acc = 0;
      for (int j = 0; j < 3; ++j) acc += s[j] / total * v.data()[j * 2 + e];
      EXPECT_NEAR(o.data()[i * 2 + e], acc, 1e-6);
    }
  }
  EXPECT_THROW(nn::attention_single_head(q, TensorF({1, 2, 2}), v), nn::ShapeError);
}

TEST(GradCheck, LinearLayerLoss) {
  Rng rng(1);
  auto x = nn::rand_leaf(rng, {3, 4});
  auto w = nn::rand_leaf(rng, {4, 2});
  auto b = nn::rand_leaf(rng, {2});
  auto target = nn::rand_leaf(rng, {3, 2});
  target.set_requires_grad(false);
  const double err = nn::grad_check(
      [&] { return nn::mse_loss(nn::linear(x, w, b), target); }, {x, w, b}, 1e-4);
  EXPECT_LE(err, 1e-6);
}

TEST(GradCheck, ConvSiluMseChain) {
  Rng rng(2);
  auto x = nn::rand_leaf(rng, {1, 2, 5, 5});
  auto w = nn::rand_leaf(rng, {3, 2, 3, 3});
  auto b = nn::rand_leaf(rng, {3});
  TensorD target({1, 3, 5, 5});
  for (auto& v : target.data()) v = rng.uniform(-1, 1);
  const double err = nn::grad_check(
      [&] { return nn::mse_loss(nn::silu(nn::conv2d(x, w, b, 1, 1)), target); }, {x, w, b}, 1e-4);
  EXPECT_LE(err, 1e-5);
}

TEST(GradCheck, ConstantOutputHasZeroError) {
  auto x = TensorD::full({3}, 1.0);
  x.set_requires_grad(true);
  const double err = nn::grad_check(
      [&] { return nn::scale(nn::sum(x), 0.0); }, {x}, 1e-4);
  EXPECT_EQ(err, 0.0);
}

TEST(GradCheck, RejectsNonScalarLoss) {
  auto x = TensorD::full({3}, 1.0);
  EXPECT_THROW(nn::grad_check([&] { return nn::silu(x); }, {x}, 1e-4), nn::ShapeError);
}

TEST(GradCheck, EveryOpOverTwentySeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (auto& c : nn::op_catalog(seed)) {
      const double err = nn::grad_check(c.loss, c.inputs, 1e-4);
      EXPECT_LE(err, 1e-4) << c.name << " seed " << seed;
    }
  }
}

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
  nn::ParamStore<float> store;
  Rng rng(1);
  auto p = store.add_fan_in("w", {4, 4}, 4, rng);
  const auto before = std::vector<float>(p.data().begin(), p.data().end());
  nn::AdamState st;
  st.init(store);
  p.node()->ensure_grad();
  nn::adam_step(store, st);
  EXPECT_EQ(st.step_count, 1);
  EXPECT_EQ(std::memcmp(before.data(), p.ptr(), before.size() * sizeof(float)), 0);
}

TEST(Adam, FirstStepIsBiasCorrected) {
  nn::ParamStore<float> store;
  auto p = store.add_filled("s", {1}, 0.5f);
  nn::AdamState st;
  st.lr = 0.1;
  st.init(store);
  p.node()->ensure_grad();
  p.grad()[0] = 1.0f;
  nn::adam_step(store, st);
  // m_hat = 1, v_hat = 1: delta = -lr / (1 + eps_hat)
  const double expected = 0.5 - 0.1 / (1.0 + 1e-8);
  EXPECT_NEAR(p.data()[0], expected, 1e-7);
  EXPECT_FALSE(p.has_grad());
}

TEST(Adam, FrozenParameterIsByteIdentical) {
  nn::ParamStore<float> store;
  Rng rng(3);
  auto frozen = store.add_fan_in("base.w", {8}, 8, rng);
  auto live = store.add_fan_in("branch.w", {8}, 8, rng);
  store.set_frozen_prefix("base.", true);
  const auto before = std::vector<float>(frozen.data().begin(), frozen.data().end());
  nn::AdamState st;
  st.init(store);
  for (int step = 0; step < 5; ++step) {
    frozen.node()->ensure_grad();
    for (auto& g : frozen.grad()) g = 3.0f;
    live.node()->ensure_grad();
    for (auto& g : live.grad()) g = -1.0f;
    nn::adam_step(store, st);
  }
  EXPECT_EQ(std::memcmp(before.data(), frozen.ptr(), before.size() * sizeof(float)), 0);
}

TEST(Adam, MissingGradientIsAnError) {
  nn::ParamStore<float> store;
  store.add_filled("w", {2}, 1.0f);
  nn::AdamState st;
  st.init(store);
  EXPECT_THROW(nn::adam_step(store, st), std::logic_error);
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  auto x = TensorD::full({1}, 3.0);
  x.set_requires_grad(true);
  auto y = nn::mul(x, x);
  auto z = nn::add(y, y);  // 2x^2 -> 4x
  z.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Autodiff, NoGradGuardRecordsNothing) {
  auto x = TensorD::full({2}, 1.0);
  x.set_requires_grad(true);
  nn::NoGradGuard guard;
  auto y = nn::silu(x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->inputs.empty());
}

TEST(Determinism, RepeatedOpsAreBitIdentical) {
  Rng a(77), b(77);
  auto x1 = random_tensor<float>(a, {4, 8, 8, 8});
  auto w1 = random_tensor<float>(a, {16, 8, 3, 3});
  auto x2 = random_tensor<float>(b, {4, 8, 8, 8});
  auto w2 = random_tensor<float>(b, {16, 8, 3, 3});
  auto y1 = nn::group_norm(nn::conv2d(x1, w1, TensorF{}, 1, 1), 4, TensorF::full({16}, 1.0f),
                           TensorF::zeros({16}));
  auto y2 = nn::group_norm(nn::conv2d(x2, w2, TensorF{}, 1, 1), 4, TensorF::full({16}, 1.0f),
                           TensorF::zeros({16}));
  EXPECT_EQ(std::memcmp(y1.ptr(), y2.ptr(), sizeof(float) * y1.numel()), 0);
}

#ifndef NDEBUG
TEST(DebugGuard, NonFiniteOutputThrows) {
  auto x = TensorF::full({1}, 100.0f);
  EXPECT_THROW(nn::exp(x), nn::NonFiniteError);
}
#endif

TEST(TensorContract, DataLengthMustMatchShape) {
  EXPECT_THROW(TensorF({2, 2}, std::vector<float>(3)), nn::ShapeError);
  EXPECT_THROW(TensorF(nn::Shape{0, 2}), nn::ShapeError);
}
