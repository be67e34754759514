#include "usdiff/diffusion/sampler.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "usdiff/numerics/rng.hpp"

namespace usdiff::diffusion {

using nn::Tensor;

SamplerKind parse_sampler_kind(const std::string& name) {
  if (name == "ddim") return SamplerKind::ddim;
  if (name == "ddpm") return SamplerKind::ddpm;
  throw std::invalid_argument("sampler: unknown kind '" + name + "' (expected ddim or ddpm)");
}

std::string to_string(SamplerKind kind) { return kind == SamplerKind::ddim ? "ddim" : "ddpm"; }

void SamplerConfig::validate(const NoiseSchedule& s) const {
  if (steps < 1 || steps > s.T) {
    throw std::invalid_argument("steps: must be in [1, " + std::to_string(s.T) + "], got " +
                                std::to_string(steps));
  }
  if (kind == SamplerKind::ddpm && steps != s.T) {
    throw std::invalid_argument("steps: ddpm requires steps == " + std::to_string(s.T));
  }
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("eta: must be in [0, 1]");
  if (!(guidance_scale >= 0.0) || !std::isfinite(guidance_scale)) {
    throw std::invalid_argument("guidance_scale: must be finite and >= 0");
  }
}

std::vector<int> sampler_timesteps(const SamplerConfig& cfg, const NoiseSchedule& s) {
  cfg.validate(s);
  std::vector<int> ts;
  if (cfg.kind == SamplerKind::ddpm || cfg.steps == s.T) {
    for (int t = s.T; t >= 1; --t) ts.push_back(t);
    return ts;
  }
  if (cfg.steps == 1) return {s.T};
  for (int i = cfg.steps - 1; i >= 0; --i) {
    const double pos = 1.0 + double(s.T - 1) * i / double(cfg.steps - 1);
    ts.push_back(static_cast<int>(std::lround(pos)));
  }
  return ts;
}

namespace {

Tensor<float> stack(const Tensor<float>& a, const Tensor<float>& b) {
  auto shape = a.shape();
  shape[0] += b.dim(0);
  Tensor<float> out(shape);
  std::memcpy(out.ptr(), a.ptr(), sizeof(float) * a.numel());
  std::memcpy(out.ptr() + a.numel(), b.ptr(), sizeof(float) * b.numel());
  return out;
}

}  // namespace

Tensor<float> guided_eps(const DenoiseFn& fn, const Tensor<float>& z, int t, int class_id,
                         const Tensor<float>& hint, double w) {
  const auto n = z.dim(0);
  const std::vector<int> cond(n, class_id), null(n, kNullClass);
  if (w == 0.0) return fn(z, t, null, hint);
  if (w == 1.0) return fn(z, t, cond, hint);
  std::vector<int> both(cond);
  both.insert(both.end(), null.begin(), null.end());
  const auto eps = fn(stack(z, z), t, both, hint.defined() ? stack(hint, hint) : hint);
  Tensor<float> out(z.shape());
  const auto per = z.numel();
  const float* ec = eps.ptr();
  const float* en = eps.ptr() + per;
  for (std::int64_t i = 0; i < per; ++i) {
    out.data()[i] = static_cast<float>(en[i] + w * (double(ec[i]) - en[i]));
  }
  return out;
}

Tensor<float> sample(const DenoiseFn& fn, const NoiseSchedule& s, const SamplerConfig& cfg,
                     int class_id, const Tensor<float>& hint, std::int64_t n,
                     const nn::Shape& latent_shape) {
  if (n < 1) throw std::invalid_argument("sample: batch size must be >= 1");
  const auto ts = sampler_timesteps(cfg, s);
  nn::NoGradGuard no_grad;
  Rng rng(cfg.seed);
  nn::Shape shape{n};
  shape.insert(shape.end(), latent_shape.begin(), latent_shape.end());
  auto x = rng.normal_tensor<float>(shape);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const auto eps = guided_eps(fn, x, t, class_id, hint, cfg.guidance_scale);
    if (cfg.kind == SamplerKind::ddpm) {
      const auto z = t > 1 ? rng.normal_tensor<float>(shape) : Tensor<float>{};
      x = ddpm_step(x, eps, t, z, s);
    } else {
      const int t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
      const auto z = cfg.eta > 0.0 ? rng.normal_tensor<float>(shape) : Tensor<float>{};
      x = ddim_step(x, eps, t, t_prev, cfg.eta, z, s);
    }
  }
  return x;
}

}  // namespace usdiff::diffusion
