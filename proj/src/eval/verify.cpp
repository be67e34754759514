#include "usdiff/eval/verify.hpp"

#include <cmath>
#include <cstdio>

#include "usdiff/diffusion/schedule.hpp"
#include "usdiff/models/codec.hpp"
#include "usdiff/models/control.hpp"
#include "usdiff/models/unet.hpp"
#include "usdiff/numerics/grad_check.hpp"
#include "usdiff/numerics/op_catalog.hpp"
#include "usdiff/train/bundle.hpp"
#include "usdiff/train/checkpoint.hpp"

namespace usdiff::eval {

using nlohmann::json;

void to_json(json& j, const CheckResult& r) {
  j = {{"name", r.name}, {"passed", r.passed}, {"value", r.value}, {"tolerance", r.tolerance}};
  if (!r.detail.empty()) j["detail"] = r.detail;
}

namespace {

template <typename T>
void fill_uniform(nn::Tensor<T>& t, Rng& rng, double lo, double hi) {
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
}

CheckResult check(std::string name, double value, double tol, std::string detail = {}) {
  return {std::move(name), value <= tol, value, tol, std::move(detail)};
}

CheckResult grad_ops(const VerifyOptions& opt) {
  double worst = 0;
  std::string where;
  for (int s = 0; s < opt.grad_seeds; ++s) {
    for (auto& c : nn::op_catalog(opt.seed + s)) {
      const double e = nn::grad_check(c.loss, c.inputs, 1e-4);
      if (e >= worst) {
        worst = e;
        where = c.name + " seed " + std::to_string(opt.seed + s);
      }
    }
  }
  return check("grad_check.ops", worst, 1e-4, "worst: " + where);
}

CheckResult grad_codec(std::uint64_t seed) {
  nn::ParamStore<double> store;
  Rng rng(seed);
  models::Codec<double> codec(models::CodecConfig{}, models::Builder<double>(store, rng).scope("codec"));
  nn::Tensor<double> img({1, 1, 64, 64});
  fill_uniform(img, rng, -1, 1);
  auto noise = rng.normal_tensor<double>({1, 4, 8, 8});
  std::vector<nn::Tensor<double>> inputs;
  for (auto& p : store.params()) inputs.push_back(p.tensor);
  nn::GradCheckOptions g;
  g.max_elements_per_input = 2;
  g.seed = seed;
  const double e = nn::grad_check(
      [&] {
        auto post = codec.encode(img);
        return models::codec_loss(img, codec.decode(models::reparameterize(post, noise)), post, 0.1);
      },
      inputs, g);
  return check("grad_check.codec_loss", e, 1e-4);
}

CheckResult grad_unet(std::uint64_t seed) {
  nn::ParamStore<double> store;
  Rng rng(seed);
  models::UNet<double> net(models::UNetConfig{}, models::Builder<double>(store, rng).scope("unet"));
  // the output conv starts at zero, which would hide every upstream gradient
  for (auto& p : store.params())
    if (p.name.starts_with("unet.out.conv.")) fill_uniform(p.tensor, rng, -0.1, 0.1);
  nn::Tensor<double> z({1, 4, 8, 8}, true);
  fill_uniform(z, rng, -1, 1);
  auto eps = rng.normal_tensor<double>({1, 4, 8, 8});
  const int t[] = {1 + static_cast<int>(rng.below(1000))}, c[] = {static_cast<int>(rng.below(4))};
  std::vector<nn::Tensor<double>> inputs{z};
  for (auto& p : store.params()) inputs.push_back(p.tensor);
  nn::GradCheckOptions g;
  g.max_elements_per_input = 2;
  g.seed = seed;
  const double e = nn::grad_check([&] { return nn::mse_loss(net(z, t, c), eps); }, inputs, g);
  return check("grad_check.unet_loss", e, 1e-4);
}

std::vector<CheckResult> schedule_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  for (int T : {1, 2, 50, 1000}) {
    const auto s = diffusion::make_schedule(T);
    double rec = 0, post = 0;
    for (int t = 1; t <= T; ++t) {
      rec = std::max(rec, std::abs(s.alpha_bar[t] - s.alpha_bar[t - 1] * (1 - s.beta[t])) / s.alpha_bar[t]);
      const double want = t == 1 ? s.beta[1] : (1 - s.alpha_bar[t - 1]) / (1 - s.alpha_bar[t]) * s.beta[t];
      post = std::max(post, std::abs(s.posterior_var[t] - want) / want);
    }
    out.push_back(check("schedule.alpha_bar_recurrence.T" + std::to_string(T), rec, 1e-12));
    out.push_back(check("schedule.posterior_variance.T" + std::to_string(T), post, 1e-12));
  }
  const auto s = diffusion::make_schedule(1000);
  Rng rng(seed);
  auto x0 = rng.normal_tensor<double>({1, 4, 8, 8});
  auto eps = rng.normal_tensor<double>({1, 4, 8, 8});
  double worst = 0;
  for (int t = 1; t <= s.T; ++t) {
    auto back = diffusion::predict_x0(diffusion::q_sample(x0, t, eps, s), eps, t, s);
    for (std::int64_t i = 0; i < x0.numel(); ++i) worst = std::max(worst, std::abs(back.data()[i] - x0.data()[i]));
  }
  out.push_back(check("schedule.predict_x0_roundtrip", worst, 1e-5));
  return out;
}

CheckResult zero_conv(const VerifyOptions& opt) {
  nn::ParamStore<float> store;
  Rng rng(opt.seed);
  models::UNet<float> base(models::UNetConfig{}, models::Builder<float>(store, rng).scope("unet"));
  for (auto& p : store.params())
    if (p.name.starts_with("unet.out.conv.")) fill_uniform(p.tensor, rng, -0.1, 0.1);
  auto branch = models::graft(models::UNetConfig{}, 64, store, rng);
  nn::NoGradGuard ng;
  double worst = 0;
  for (int k = 0; k < opt.zero_conv_trials; ++k) {
    auto z = rng.normal_tensor<float>({1, 4, 8, 8});
    const int t[] = {1 + static_cast<int>(rng.below(1000))}, c[] = {static_cast<int>(rng.below(4))};
    nn::Tensor<float> mask({1, 1, 64, 64});
    for (auto& v : mask.data()) v = rng.uniform() < 0.3 ? 1.0f : 0.0f;
    auto a = models::controlled_forward(base, branch, z, t, c, mask);
    auto b = base(z, t, c);
    for (std::int64_t i = 0; i < a.numel(); ++i)
      worst = std::max(worst, std::abs(double(a.data()[i]) - double(b.data()[i])));
  }
  return check("zero_conv.identity", worst, 0.0, std::to_string(opt.zero_conv_trials) + " random tuples");
}

CheckResult checkpoint_roundtrip(std::uint64_t seed) {
  train::Checkpoint ck;
  ck.stage = "codec";
  ck.seed = seed;
  train::ModelConfig mc;
  ck.model = mc;
  Rng rng(seed);
  models::Codec<float> codec(mc.codec, models::Builder<float>(ck.params, rng).scope("codec"));
  ck.optim.init(ck.params);
  const auto bytes = train::encode_checkpoint(ck);
  auto back = train::decode_checkpoint(bytes);
  const bool same = train::encode_checkpoint(back) == bytes && back.hash == ck.hash;
  auto bad = bytes;
  bad[bad.size() / 2] ^= 0x01;
  std::string err;
  try {
    train::decode_checkpoint(bad);
  } catch (const std::exception& e) {
    err = e.what();
  }
  const bool detected = err.find("hash mismatch") != std::string::npos;
  return {"checkpoint.roundtrip", same && detected, same && detected ? 0.0 : 1.0, 0.0,
          same ? (detected ? "" : "corruption not detected: " + err) : "re-encoded bytes differ"};
}

}  // namespace

std::vector<CheckResult> run_invariant_suite(const VerifyOptions& opt) {
  std::vector<CheckResult> out;
  out.push_back(grad_ops(opt));
  out.push_back(grad_codec(opt.seed));
  out.push_back(grad_unet(opt.seed));
  for (auto& c : schedule_checks(opt.seed)) out.push_back(std::move(c));
  out.push_back(zero_conv(opt));
  out.push_back(checkpoint_roundtrip(opt.seed));
  return out;
}

CheckResult verify_checkpoint_file(const std::string& path) {
  auto ck = train::load_checkpoint(path);
  auto b = train::Bundle::bind(ck);
  (void)b;
  return {"checkpoint.file", true, 0.0, 0.0, ck.stage + " step " + std::to_string(ck.step) + " sha256 " + ck.hash};
}

}  // namespace usdiff::eval
