#include "usdiff/diffusion/schedule.hpp"

#include <cmath>
#include <string>

#include "usdiff/numerics/ops.hpp"

namespace usdiff::diffusion {

using nn::Tensor;

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > T) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " + std::to_string(T) +
                            "]");
  }
}

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("schedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.T = T;
  s.beta.assign(T + 1, 0.0);
  s.alpha.assign(T + 1, 1.0);
  s.alpha_bar.assign(T + 1, 1.0);
  s.posterior_var.assign(T + 1, 0.0);
  for (int t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 0.0 : double(t - 1) / double(T - 1);
    s.beta[t] = beta_start + (beta_end - beta_start) * frac;
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    s.posterior_var[t] =
        t == 1 ? s.beta[1] : (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]) * s.beta[t];
  }
  return s;
}

namespace {

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw nn::ShapeError(std::string(op) + ": shape mismatch " + nn::to_string(a.shape()) +
                         " vs " + nn::to_string(b.shape()));
  }
}

// out = ca * a + cb * b, evaluated in double per element.
template <typename T>
Tensor<T> combine(const Tensor<T>& a, double ca, const Tensor<T>& b, double cb) {
  Tensor<T> out(a.shape());
  auto o = out.data();
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<T>(ca * da[i] + cb * db[i]);
  return out;
}

}  // namespace

template <typename T>
Tensor<T> q_sample(const Tensor<T>& x0, int t, const Tensor<T>& eps, const NoiseSchedule& s) {
  require_same(x0, eps, "q_sample");
  s.check_step(t);
  return combine(x0, std::sqrt(s.alpha_bar[t]), eps, std::sqrt(1.0 - s.alpha_bar[t]));
}

template <typename T>
Tensor<T> q_sample(const Tensor<T>& x0, std::span<const int> t, const Tensor<T>& eps,
                   const NoiseSchedule& s) {
  require_same(x0, eps, "q_sample");
  const auto n = x0.dim(0);
  if (static_cast<std::int64_t>(t.size()) != n) {
    throw nn::ShapeError("q_sample: " + std::to_string(t.size()) + " timesteps for batch of " +
                         std::to_string(n));
  }
  Tensor<T> out(x0.shape());
  const auto per = x0.numel() / n;
  for (std::int64_t b = 0; b < n; ++b) {
    s.check_step(t[b]);
    const double ca = std::sqrt(s.alpha_bar[t[b]]), cb = std::sqrt(1.0 - s.alpha_bar[t[b]]);
    for (std::int64_t i = b * per; i < (b + 1) * per; ++i) {
      out.data()[i] = static_cast<T>(ca * x0.data()[i] + cb * eps.data()[i]);
    }
  }
  return out;
}

template <typename T>
Tensor<T> predict_x0(const Tensor<T>& x_t, const Tensor<T>& eps_hat, int t,
                     const NoiseSchedule& s) {
  require_same(x_t, eps_hat, "predict_x0");
  s.check_step(t);
  const double r = 1.0 / std::sqrt(s.alpha_bar[t]);
  return combine(x_t, r, eps_hat, -std::sqrt(1.0 - s.alpha_bar[t]) * r);
}

template <typename T>
Tensor<T> ddpm_step(const Tensor<T>& x_t, const Tensor<T>& eps_hat, int t, const Tensor<T>& z,
                    const NoiseSchedule& s) {
  require_same(x_t, eps_hat, "ddpm_step");
  s.check_step(t);
  const double r = 1.0 / std::sqrt(s.alpha[t]);
  const double ce = s.beta[t] / std::sqrt(1.0 - s.alpha_bar[t]);
  auto mean = combine(x_t, r, eps_hat, -ce * r);
  if (t == 1) return mean;
  require_same(x_t, z, "ddpm_step");
  return combine(mean, 1.0, z, std::sqrt(s.posterior_var[t]));
}

template <typename T>
Tensor<T> ddim_step(const Tensor<T>& x_t, const Tensor<T>& eps_hat, int t, int t_prev, double eta,
                    const Tensor<T>& z, const NoiseSchedule& s) {
  require_same(x_t, eps_hat, "ddim_step");
  s.check_step(t);
  if (t_prev < 0 || t_prev >= t) {
    throw std::invalid_argument("ddim_step: need 0 <= t_prev < t, got t=" + std::to_string(t) +
                                " t_prev=" + std::to_string(t_prev));
  }
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("ddim_step: eta outside [0, 1]");
  const double ab = s.alpha_bar[t], ab_prev = s.alpha_bar[t_prev];
  const double sigma =
      eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
  const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
  // x_prev = sqrt(ab_prev) * x0_hat + dir * eps_hat, expanded in terms of x_t
  const double cx = std::sqrt(ab_prev / ab);
  const double ce = dir - std::sqrt(ab_prev) * std::sqrt(1.0 - ab) / std::sqrt(ab);
  auto out = combine(x_t, cx, eps_hat, ce);
  if (sigma == 0.0) return out;
  require_same(x_t, z, "ddim_step");
  return combine(out, 1.0, z, sigma);
}

template <typename T>
Tensor<T> diffusion_loss(const Tensor<T>& eps, const Tensor<T>& eps_hat) {
  return nn::mse_loss(eps_hat, eps);
}

#define USDIFF_INSTANTIATE(T)                                                                    \
  template Tensor<T> q_sample<T>(const Tensor<T>&, int, const Tensor<T>&, const NoiseSchedule&); \
  template Tensor<T> q_sample<T>(const Tensor<T>&, std::span<const int>, const Tensor<T>&,       \
                                 const NoiseSchedule&);                                          \
  template Tensor<T> predict_x0<T>(const Tensor<T>&, const Tensor<T>&, int,                     \
                                   const NoiseSchedule&);                                        \
  template Tensor<T> ddpm_step<T>(const Tensor<T>&, const Tensor<T>&, int, const Tensor<T>&,    \
                                  const NoiseSchedule&);                                         \
  template Tensor<T> ddim_step<T>(const Tensor<T>&, const Tensor<T>&, int, int, double,         \
                                  const Tensor<T>&, const NoiseSchedule&);                       \
  template Tensor<T> diffusion_loss<T>(const Tensor<T>&, const Tensor<T>&);
USDIFF_INSTANTIATE(float)
USDIFF_INSTANTIATE(double)
#undef USDIFF_INSTANTIATE

}  // namespace usdiff::diffusion
