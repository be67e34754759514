#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "usdiff/numerics/tensor.hpp"

namespace usdiff::diffusion {

/// Timestep-indexed tables, stored 1-based: index t holds the value for step t
/// and index 0 holds the t = 0 convention (beta 0, alpha_bar 1).
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> posterior_var;

  /// Throws std::out_of_range unless 1 <= t <= T.
  void check_step(int t) const;
};

/// Linear betas from beta_start to beta_end inclusive.
NoiseSchedule make_schedule(int T = 1000, double beta_start = 1e-4, double beta_end = 0.02);

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
template <typename T>
nn::Tensor<T> q_sample(const nn::Tensor<T>& x0, int t, const nn::Tensor<T>& eps,
                       const NoiseSchedule& s);

/// Per-item timesteps, t.size() == batch.
template <typename T>
nn::Tensor<T> q_sample(const nn::Tensor<T>& x0, std::span<const int> t, const nn::Tensor<T>& eps,
                       const NoiseSchedule& s);

template <typename T>
nn::Tensor<T> predict_x0(const nn::Tensor<T>& x_t, const nn::Tensor<T>& eps_hat, int t,
                         const NoiseSchedule& s);

/// Ancestral DDPM step. At t = 1 the noise z is ignored.
template <typename T>
nn::Tensor<T> ddpm_step(const nn::Tensor<T>& x_t, const nn::Tensor<T>& eps_hat, int t,
                        const nn::Tensor<T>& z, const NoiseSchedule& s);

/// DDIM step from t to t_prev (t_prev may be 0). z may be undefined when
/// eta == 0.
template <typename T>
nn::Tensor<T> ddim_step(const nn::Tensor<T>& x_t, const nn::Tensor<T>& eps_hat, int t, int t_prev,
                        double eta, const nn::Tensor<T>& z, const NoiseSchedule& s);

/// Mean squared error between true and predicted noise.
template <typename T>
nn::Tensor<T> diffusion_loss(const nn::Tensor<T>& eps, const nn::Tensor<T>& eps_hat);

}  // namespace usdiff::diffusion
