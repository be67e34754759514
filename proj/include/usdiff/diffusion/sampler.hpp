#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "usdiff/diffusion/schedule.hpp"

namespace usdiff::diffusion {

inline constexpr int kNullClass = 3;

enum class SamplerKind { ddpm, ddim };

SamplerKind parse_sampler_kind(const std::string& name);
std::string to_string(SamplerKind kind);

struct SamplerConfig {
  SamplerKind kind = SamplerKind::ddim;
  int steps = 50;
  double eta = 0.0;
  double guidance_scale = 3.0;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate(const NoiseSchedule& s) const;
};

/// Descending timesteps visited by the sampler. DDIM uses `steps` values
/// evenly spaced over [1, T], always including T and 1.
std::vector<int> sampler_timesteps(const SamplerConfig& cfg, const NoiseSchedule& s);

/// eps_hat for a batch of latents at one shared timestep. `hint` is either
/// undefined or a mask batch aligned with z.
using DenoiseFn = std::function<nn::Tensor<float>(
    const nn::Tensor<float>& z, int t, std::span<const int> class_ids, const nn::Tensor<float>& hint)>;

/// Classifier-free guided prediction:
///   w == 0: unconditional only; w == 1: conditional only;
///   otherwise eps_null + w (eps_cond - eps_null) from one stacked batch.
nn::Tensor<float> guided_eps(const DenoiseFn& fn, const nn::Tensor<float>& z, int t, int class_id,
                             const nn::Tensor<float>& hint, double w);

/// Full reverse loop from z_T ~ N(0, I) drawn from an Rng seeded with
/// cfg.seed. Returns latents of shape [n, latent_shape...].
nn::Tensor<float> sample(const DenoiseFn& fn, const NoiseSchedule& s, const SamplerConfig& cfg,
                         int class_id, const nn::Tensor<float>& hint, std::int64_t n,
                         const nn::Shape& latent_shape = {4, 8, 8});

}  // namespace usdiff::diffusion
