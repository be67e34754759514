#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numeric>

#include "usdiff/diffusion/schedule.hpp"
#include "usdiff/models/classifier.hpp"
#include "usdiff/models/codec.hpp"
#include "usdiff/models/control.hpp"
#include "usdiff/models/unet.hpp"
#include "usdiff/numerics/adam.hpp"
#include "usdiff/numerics/grad_check.hpp"

namespace m = usdiff::models;
namespace nn = usdiff::nn;
using usdiff::Rng;
using TensorF = nn::Tensor<float>;
using TensorD = nn::Tensor<double>;

namespace {

template <typename T>
void fill_uniform(nn::Tensor<T>& t, Rng& rng, double lo, double hi) {
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
}

template <typename T>
nn::Tensor<T> uniform(Rng& rng, nn::Shape shape, double lo = -1, double hi = 1) {
  nn::Tensor<T> t(std::move(shape));
  fill_uniform(t, rng, lo, hi);
  return t;
}

template <typename T>
double max_abs(const nn::Tensor<T>& t) {
  double m = 0;
  for (auto v : t.data()) m = std::max(m, std::abs(double(v)));
  return m;
}

template <typename T>
double max_abs_diff(const nn::Tensor<T>& a, const nn::Tensor<T>& b) {
  double m = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(double(a.data()[i]) - double(b.data()[i])));
  return m;
}

// Counting oracle, written from the architecture description.
std::int64_t conv_params(std::int64_t cin, std::int64_t cout, std::int64_t k) {
  return cout * cin * k * k + cout;
}
std::int64_t linear_params(std::int64_t in, std::int64_t out) { return in * out + out; }
std::int64_t res_params(std::int64_t cin, std::int64_t cout, std::int64_t e) {
  return 2 * cin + conv_params(cin, cout, 3) + linear_params(e, cout) + 2 * cout +
         conv_params(cout, cout, 3) + (cin != cout ? conv_params(cin, cout, 1) : 0);
}
std::int64_t encoder_params_default() {
  const std::int64_t e = 128;
  std::int64_t n = 2 * linear_params(e, e) + 4 * e + conv_params(4, 32, 3);
  n += 2 * res_params(32, 32, e) + conv_params(32, 32, 3);
  n += res_params(32, 64, e) + res_params(64, 64, e) + conv_params(64, 64, 3);
  n += res_params(64, 128, e) + res_params(128, 128, e);
  n += 2 * res_params(128, 128, e) + 2 * 128 + 4 * linear_params(128, 128);
  return n;
}
std::int64_t decoder_params_default() {
  const std::int64_t e = 128;
  // skips, last first: 128 128 64 | 64 64 32 | 32 32 32
  std::int64_t n = res_params(256, 128, e) + res_params(256, 128, e) + res_params(192, 128, e) +
                   conv_params(128, 128, 3);
  n += res_params(192, 64, e) + res_params(128, 64, e) + res_params(96, 64, e) +
       conv_params(64, 64, 3);
  n += res_params(96, 32, e) + res_params(64, 32, e) + res_params(64, 32, e);
  n += 2 * 32 + conv_params(32, 4, 3);
  return n;
}

struct UNetFixture {
  nn::ParamStore<float> store;
  m::UNet<float> net;
  explicit UNetFixture(std::uint64_t seed, m::UNetConfig cfg = {}) {
    Rng rng(seed);
    net = m::UNet<float>(cfg, m::Builder<float>(store, rng).scope("unet"));
  }
};

}  // namespace

TEST(Sinusoidal, Values) {
  const int zero[] = {0};
  auto e0 = m::sinusoidal_embed<double>(zero, 8);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(e0.data()[i], i % 2 ? 1.0 : 0.0);
  double norm = 0;
  for (double v : e0.data()) norm += v * v;
  EXPECT_DOUBLE_EQ(std::sqrt(norm), std::sqrt(8 / 2.0));
  const int one[] = {1};
  auto e1 = m::sinusoidal_embed<double>(one, 2);
  EXPECT_DOUBLE_EQ(e1.data()[0], std::sin(1.0));
  EXPECT_DOUBLE_EQ(e1.data()[1], std::cos(1.0));
  EXPECT_THROW(m::sinusoidal_embed<double>(one, 3), std::invalid_argument);
}

TEST(UNet, ShapeAndFreshOutputIsZero) {
  UNetFixture f(1);
  Rng rng(2);
  for (int n : {1, 3}) {
    auto z = rng.normal_tensor<float>({n, 4, 8, 8});
    std::vector<int> t(n, 500), c(n, 1);
    auto eps = f.net(z, t, c);
    EXPECT_EQ(eps.shape(), z.shape());
    EXPECT_EQ(max_abs(eps), 0.0);
  }
}

TEST(UNet, AllZeroWeightsGiveZeroOutput) {
  UNetFixture f(1);
  for (auto& p : f.store.params()) std::fill(p.tensor.data().begin(), p.tensor.data().end(), 0.0f);
  Rng rng(3);
  auto z = rng.normal_tensor<float>({2, 4, 8, 8});
  const int t[] = {1, 999}, c[] = {0, 3};
  EXPECT_EQ(max_abs(f.net(z, t, c)), 0.0);
}

TEST(UNet, InitIsDeterministicPerSeed) {
  UNetFixture a(7), b(7), c(8);
  ASSERT_EQ(a.store.params().size(), b.store.params().size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.store.params().size(); ++i) {
    const auto& pa = a.store.params()[i].tensor;
    const auto& pb = b.store.params()[i].tensor;
    EXPECT_EQ(std::memcmp(pa.ptr(), pb.ptr(), sizeof(float) * pa.numel()), 0);
    const auto& pc = c.store.params()[i].tensor;
    any_diff |= std::memcmp(pa.ptr(), pc.ptr(), sizeof(float) * pa.numel()) != 0;
  }
  EXPECT_TRUE(any_diff);
}

TEST(UNet, ParameterCountMatchesCountingOracle) {
  UNetFixture f(1);
  EXPECT_EQ(f.store.count(), encoder_params_default() + decoder_params_default());
  EXPECT_EQ(f.store.count_with_prefix("unet.up.") + f.store.count_with_prefix("unet.out."),
            decoder_params_default());
}

TEST(UNet, RejectsBadInputs) {
  UNetFixture f(1);
  auto z = TensorF::zeros({1, 4, 8, 8});
  const int ok_t[] = {5}, bad_t[] = {0}, ok_c[] = {2}, bad_c[] = {4};
  EXPECT_THROW(f.net(z, bad_t, ok_c), std::out_of_range);
  EXPECT_THROW(f.net(z, ok_t, bad_c), std::out_of_range);
  EXPECT_THROW(f.net(TensorF::zeros({1, 4, 4, 4}), ok_t, ok_c), nn::ShapeError);
}

namespace {

// Randomizes the zero-initialized output conv so outputs and gradients are
// non-trivial.
template <typename T>
void wake_output(nn::ParamStore<T>& store, Rng& rng) {
  for (auto& p : store.params())
    if (p.name.starts_with("unet.out.conv.")) fill_uniform(p.tensor, rng, -0.1, 0.1);
}

}  // namespace

TEST(UNet, BatchIndependence) {
  UNetFixture f(4);
  Rng rng(5);
  wake_output(f.store, rng);
  auto z = rng.normal_tensor<float>({3, 4, 8, 8});
  const int t[] = {10, 400, 900}, c[] = {0, 1, 2};
  auto full = f.net(z, t, c);
  // permuted batch: (2, 0, 1)
  TensorF zp({3, 4, 8, 8});
  const int perm[] = {2, 0, 1};
  for (int i = 0; i < 3; ++i)
    std::memcpy(zp.ptr() + i * 256, z.ptr() + perm[i] * 256, 256 * sizeof(float));
  const int tp[] = {900, 10, 400}, cp[] = {2, 0, 1};
  auto permuted = f.net(zp, tp, cp);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 256; ++j)
      EXPECT_NEAR(permuted.data()[i * 256 + j], full.data()[perm[i] * 256 + j], 1e-5);
}

TEST(UNet, ClassInvariantWhenTableRowsEqual) {
  UNetFixture f(4);
  Rng rng(6);
  wake_output(f.store, rng);
  auto z = rng.normal_tensor<float>({1, 4, 8, 8});
  const int t[] = {300}, c0[] = {0}, c2[] = {2};
  EXPECT_GT(max_abs_diff(f.net(z, t, c0), f.net(z, t, c2)), 0.0);
  auto table = f.store.find("unet.class_table")->tensor;
  for (int r = 1; r < 4; ++r)
    std::copy(table.data().begin(), table.data().begin() + 128, table.data().begin() + r * 128);
  EXPECT_EQ(max_abs_diff(f.net(z, t, c0), f.net(z, t, c2)), 0.0);
}

TEST(UNet, DiffusionLossGradCheckFp64) {
  nn::ParamStore<double> store;
  Rng rng(9);
  m::UNet<double> net(m::UNetConfig{}, m::Builder<double>(store, rng).scope("unet"));
  wake_output(store, rng);
  TensorD z({1, 4, 8, 8}, true);
  fill_uniform(z, rng, -1, 1);
  auto eps = uniform<double>(rng, {1, 4, 8, 8});
  const int t[] = {250}, c[] = {1};
  std::vector<TensorD> inputs{z};
  for (auto& p : store.params()) inputs.push_back(p.tensor);
  nn::GradCheckOptions opt;
  opt.max_elements_per_input = 2;
  opt.seed = 3;
  const double err =
      nn::grad_check([&] { return nn::mse_loss(net(z, t, c), eps); }, inputs, opt);
  EXPECT_LE(err, 1e-4);
}

TEST(UNet, SingleStepDescends) {
  UNetFixture f(10);
  Rng rng(11);
  auto z = rng.normal_tensor<float>({1, 4, 8, 8});
  auto eps = rng.normal_tensor<float>({1, 4, 8, 8});
  const int t[] = {100}, c[] = {2};
  nn::AdamState st;
  st.lr = 1e-4;
  st.init(f.store);
  auto loss0 = nn::mse_loss(f.net(z, t, c), eps);
  loss0.backward();
  nn::adam_step(f.store, st);
  nn::NoGradGuard ng;
  EXPECT_LT(nn::mse_loss(f.net(z, t, c), eps).item(), loss0.item());
}

TEST(Builder, BindModeNamesFirstMismatchedBlob) {
  nn::ParamStore<float> store;
  Rng rng(1);
  m::UNetConfig small;
  small.base_channels = 16;
  m::UNet<float>(small, m::Builder<float>(store, rng).scope("unet"));
  try {
    m::UNet<float>(m::UNetConfig{}, m::Builder<float>(store).scope("unet"));
    FAIL() << "expected BlobMismatchError";
  } catch (const m::BlobMismatchError& e) {
    EXPECT_NE(std::string(e.what()).find("unet.conv_in.weight"), std::string::npos) << e.what();
  }
  nn::ParamStore<float> empty;
  EXPECT_THROW(m::UNet<float>(small, m::Builder<float>(empty).scope("unet")),
               m::BlobMismatchError);
}

// ---- codec ---------------------------------------------------------------

TEST(Codec, ShapeContractAndRange) {
  nn::ParamStore<float> store;
  Rng rng(1);
  m::Codec<float> codec(m::CodecConfig{}, m::Builder<float>(store, rng).scope("codec"));
  auto x = uniform<float>(rng, {2, 1, 64, 64});
  auto p = codec.encode(x);
  EXPECT_EQ(p.mu.shape(), (nn::Shape{2, 4, 8, 8}));
  EXPECT_EQ(p.logvar.shape(), (nn::Shape{2, 4, 8, 8}));
  auto y = codec.decode(rng.normal_tensor<float>({3, 4, 8, 8}));
  EXPECT_EQ(y.shape(), (nn::Shape{3, 1, 64, 64}));
  EXPECT_LE(max_abs(y), 1.0);
  EXPECT_THROW(codec.encode(TensorF::zeros({1, 1, 32, 32})), nn::ShapeError);
  EXPECT_THROW(codec.decode(TensorF::zeros({1, 4, 4, 4})), nn::ShapeError);
  auto p2 = codec.encode(x);
  EXPECT_EQ(max_abs_diff(p.mu, p2.mu), 0.0);
  EXPECT_EQ(max_abs_diff(p.logvar, p2.logvar), 0.0);
}

TEST(Codec, ZeroWeightsGiveStandardPosterior) {
  nn::ParamStore<float> store;
  Rng rng(1);
  m::Codec<float> codec(m::CodecConfig{}, m::Builder<float>(store, rng).scope("codec"));
  for (auto& p : store.params()) std::fill(p.tensor.data().begin(), p.tensor.data().end(), 0.0f);
  auto p = codec.encode(uniform<float>(rng, {1, 1, 64, 64}));
  EXPECT_EQ(max_abs(p.mu), 0.0);
  EXPECT_EQ(max_abs(p.logvar), 0.0);
}

TEST(Codec, ReparameterizeFormula) {
  Rng rng(2);
  m::LatentPosterior<double> p{uniform<double>(rng, {1, 4, 8, 8}),
                               uniform<double>(rng, {1, 4, 8, 8})};
  auto noise = rng.normal_tensor<double>({1, 4, 8, 8});
  EXPECT_EQ(max_abs_diff(m::reparameterize(p, TensorD::zeros(noise.shape())), p.mu), 0.0);
  auto z = m::reparameterize(p, noise);
  for (int i = 0; i < 256; ++i)
    EXPECT_NEAR(z.data()[i], p.mu.data()[i] + std::exp(p.logvar.data()[i] / 2) * noise.data()[i],
                1e-12);
  m::LatentPosterior<double> unit{p.mu, TensorD::zeros(p.mu.shape())};
  auto zu = m::reparameterize(unit, noise);
  for (int i = 0; i < 256; ++i) EXPECT_DOUBLE_EQ(zu.data()[i], p.mu.data()[i] + noise.data()[i]);
  EXPECT_THROW(m::reparameterize(p, TensorD::zeros({1, 4, 4, 4})), nn::ShapeError);
}

TEST(Codec, LossComponents) {
  Rng rng(3);
  auto img = uniform<double>(rng, {2, 1, 4, 4});
  m::LatentPosterior<double> zero{TensorD::zeros({2, 4, 2, 2}), TensorD::zeros({2, 4, 2, 2})};
  EXPECT_EQ(m::codec_loss(img, img, zero, 1e-4).item(), 0.0);
  auto recon = uniform<double>(rng, {2, 1, 4, 4});
  m::LatentPosterior<double> p{uniform<double>(rng, {2, 4, 2, 2}), uniform<double>(rng, {2, 4, 2, 2})};
  EXPECT_DOUBLE_EQ(m::codec_loss(img, recon, p, 0.0).item(), nn::mse_loss(recon, img).item());
  double mse = 0, kl = 0;
  for (int i = 0; i < 32; ++i) mse += std::pow(img.data()[i] - recon.data()[i], 2);
  for (int i = 0; i < 32; ++i) {
    const double mu = p.mu.data()[i], lv = p.logvar.data()[i];
    kl += 0.5 * (mu * mu + std::exp(lv) - 1 - lv);
  }
  EXPECT_NEAR(m::codec_loss(img, recon, p, 0.25).item(), mse / 32 + 0.25 * kl / 32, 1e-12);
}

TEST(Codec, LossGradCheckFp64) {
  nn::ParamStore<double> store;
  Rng rng(4);
  m::Codec<double> codec(m::CodecConfig{}, m::Builder<double>(store, rng).scope("codec"));
  auto img = uniform<double>(rng, {1, 1, 64, 64});
  auto noise = rng.normal_tensor<double>({1, 4, 8, 8});
  std::vector<TensorD> inputs;
  for (auto& p : store.params()) inputs.push_back(p.tensor);
  nn::GradCheckOptions opt;
  opt.max_elements_per_input = 2;
  opt.seed = 5;
  const double err = nn::grad_check(
      [&] {
        auto post = codec.encode(img);
        return m::codec_loss(img, codec.decode(m::reparameterize(post, noise)), post, 0.1);
      },
      inputs, opt);
  EXPECT_LE(err, 1e-4);
}

TEST(Codec, LatentScale) {
  Rng rng(5);
  auto unit = rng.normal_tensor<float>({200, 4, 8, 8});
  EXPECT_NEAR(m::latent_scale(unit), 1.0, 0.05);
  EXPECT_THROW(m::latent_scale(TensorF::full({150, 4, 8, 8}, 0.3f)), std::invalid_argument);
  EXPECT_THROW(m::latent_scale(rng.normal_tensor<float>({99, 4, 8, 8})), std::invalid_argument);
  auto scaled = uniform<float>(rng, {100, 4, 2, 2}, -3, 5);
  double s = 0, s2 = 0;
  for (float v : scaled.data()) s += v;
  const double mean = s / scaled.numel();
  for (float v : scaled.data()) s2 += (v - mean) * (v - mean);
  EXPECT_NEAR(m::latent_scale(scaled), std::sqrt(s2 / scaled.numel()), 1e-9);
}

TEST(Codec, ConfigValidation) {
  m::CodecConfig c;
  c.down_factor = 6;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.image_size = 60;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

// ---- control -------------------------------------------------------------

namespace {

struct GraftFixture {
  nn::ParamStore<float> store;
  m::UNet<float> base;
  m::ControlBranch<float> branch;
  explicit GraftFixture(std::uint64_t seed) {
    Rng rng(seed);
    base = m::UNet<float>(m::UNetConfig{}, m::Builder<float>(store, rng).scope("unet"));
    wake_output(store, rng);  // stands in for a trained base
    branch = m::graft(m::UNetConfig{}, 64, store, rng);
  }
};

}  // namespace

TEST(Graft, EncoderCopyIsByteIdenticalAndZeroConvsAreZero) {
  GraftFixture f(1);
  int copied = 0;
  for (const auto& p : f.store.params()) {
    if (!p.name.starts_with("control.")) continue;
    if (p.name.starts_with("control.zero.")) {
      EXPECT_EQ(max_abs(p.tensor), 0.0) << p.name;
      continue;
    }
    if (p.name.starts_with("control.hint.")) continue;
    const auto* src = f.store.find("unet." + p.name.substr(8));
    ASSERT_NE(src, nullptr) << p.name;
    EXPECT_EQ(std::memcmp(src->tensor.ptr(), p.tensor.ptr(), sizeof(float) * p.tensor.numel()), 0);
    ++copied;
  }
  EXPECT_GT(copied, 50);
  for (const auto& p : f.store.params()) EXPECT_EQ(p.frozen, p.name.starts_with("unet.")) << p.name;
}

TEST(Graft, TrainableCountMatchesOracle) {
  GraftFixture f(1);
  const std::int64_t hint = conv_params(1, 16, 3) + conv_params(16, 32, 3) + conv_params(32, 32, 3);
  std::int64_t zero = 0;
  for (int c : {32, 32, 32, 32, 64, 64, 64, 128, 128, 128}) zero += conv_params(c, c, 1);
  EXPECT_EQ(f.store.count_with_prefix("control."), encoder_params_default() + hint + zero);
}

TEST(Graft, IncompleteBaseIsRejected) {
  nn::ParamStore<float> store;
  Rng rng(1);
  m::UNetEncoder<float>(m::UNetConfig{}, m::Builder<float>(store, rng).scope("unet"));
  EXPECT_THROW(m::graft(m::UNetConfig{}, 64, store, rng), m::BlobMismatchError);
}

TEST(Graft, FreshBranchIsExactIdentity) {
  GraftFixture f(2);
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto z = rng.normal_tensor<float>({2, 4, 8, 8});
    const int t[] = {1 + static_cast<int>(rng.below(1000)), 1 + static_cast<int>(rng.below(1000))};
    const int c[] = {static_cast<int>(rng.below(4)), static_cast<int>(rng.below(4))};
    TensorF mask({2, 1, 64, 64});
    for (auto& v : mask.data()) v = rng.uniform() < 0.3 ? 1.0f : 0.0f;
    auto a = m::controlled_forward(f.base, f.branch, z, t, c, mask);
    auto b = f.base(z, t, c);
    EXPECT_EQ(max_abs_diff(a, b), 0.0);
  }
  EXPECT_THROW(m::controlled_forward(f.base, f.branch, TensorF::zeros({1, 4, 8, 8}),
                                     std::vector<int>{5}, std::vector<int>{1},
                                     TensorF::zeros({1, 1, 32, 32})),
               nn::ShapeError);
}

TEST(Graft, GradientReachesOnlyBranch) {
  GraftFixture f(3);
  Rng rng(4);
  auto z = rng.normal_tensor<float>({1, 4, 8, 8});
  auto eps = rng.normal_tensor<float>({1, 4, 8, 8});
  const int t[] = {200}, c[] = {2};
  auto mask = TensorF::full({1, 1, 64, 64}, 1.0f);
  nn::mse_loss(m::controlled_forward(f.base, f.branch, z, t, c, mask), eps).backward();
  for (const auto& p : f.store.params()) {
    if (p.name.starts_with("unet.")) {
      EXPECT_FALSE(p.tensor.has_grad()) << p.name;
    }
  }
  // zero convs receive gradient immediately because their inputs are nonzero
  const auto& zg = f.store.find("control.zero.9.weight")->tensor;
  ASSERT_TRUE(zg.has_grad());
  double gmax = 0;
  for (float g : zg.grad()) gmax = std::max(gmax, std::abs(double(g)));
  EXPECT_GT(gmax, 0.0);
}

TEST(Graft, ControlledForwardGradCheckFp64) {
  nn::ParamStore<double> store;
  Rng rng(5);
  m::UNet<double> base(m::UNetConfig{}, m::Builder<double>(store, rng).scope("unet"));
  wake_output(store, rng);
  auto branch = m::graft(m::UNetConfig{}, 64, store, rng);
  for (auto& p : store.params())
    if (p.name.starts_with("control.zero.")) fill_uniform(p.tensor, rng, -0.2, 0.2);
  auto z = uniform<double>(rng, {1, 4, 8, 8});
  auto eps = uniform<double>(rng, {1, 4, 8, 8});
  TensorD mask({1, 1, 64, 64});
  for (auto& v : mask.data()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
  const int t[] = {640}, c[] = {0};
  std::vector<TensorD> inputs;
  for (auto& p : store.params())
    if (!p.frozen) inputs.push_back(p.tensor);
  nn::GradCheckOptions opt;
  opt.max_elements_per_input = 2;
  const double err = nn::grad_check(
      [&] { return nn::mse_loss(m::controlled_forward(base, branch, z, t, c, mask), eps); },
      inputs, opt);
  EXPECT_LE(err, 1e-4);
}

// ---- classifier ----------------------------------------------------------

TEST(Classifier, LogitsShapeAndSoftmaxRows) {
  nn::ParamStore<float> store;
  Rng rng(1);
  m::Classifier<float> clf(m::ClassifierConfig{}, m::Builder<float>(store, rng).scope("classifier"));
  auto logits = clf(uniform<float>(rng, {5, 1, 64, 64}));
  ASSERT_EQ(logits.shape(), (nn::Shape{5, 3}));
  auto probs = nn::softmax(logits, 1);
  for (int i = 0; i < 5; ++i) {
    double s = 0;
    for (int j = 0; j < 3; ++j) {
      EXPECT_TRUE(std::isfinite(logits.data()[i * 3 + j]));
      s += probs.data()[i * 3 + j];
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  const std::int64_t expected = conv_params(1, 16, 3) + 32 + conv_params(16, 32, 3) + 64 +
                                conv_params(32, 64, 3) + 128 + linear_params(64, 3);
  EXPECT_EQ(store.count(), expected);
}

TEST(Classifier, CrossEntropyGradCheckFp64) {
  nn::ParamStore<double> store;
  Rng rng(2);
  m::Classifier<double> clf(m::ClassifierConfig{}, m::Builder<double>(store, rng).scope("classifier"));
  auto x = uniform<double>(rng, {3, 1, 64, 64});
  const int labels[] = {0, 2, 1};
  std::vector<TensorD> inputs;
  for (auto& p : store.params()) inputs.push_back(p.tensor);
  nn::GradCheckOptions opt;
  opt.max_elements_per_input = 3;
  EXPECT_LE(nn::grad_check([&] { return nn::cross_entropy(clf(x), labels); }, inputs, opt), 1e-4);
}
