#include "dmsm/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dmsm {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("NoiseSchedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("NoiseSchedule: need 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i)
    betas[i] = steps == 1 ? beta_start
                          : beta_start + (beta_end - beta_start) * i / static_cast<double>(steps - 1);
  return from_betas(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw std::invalid_argument("NoiseSchedule: empty beta table");
  for (double b : betas)
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("NoiseSchedule: beta outside (0, 1)");
  NoiseSchedule s;
  const std::size_t n = betas.size();
  s.beta_ = std::move(betas);
  s.alpha_.resize(n);
  s.alpha_bar_.resize(n);
  s.beta_tilde_.resize(n);
  s.sigma_.resize(n);
  double prod = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    s.alpha_[i] = 1.0 - s.beta_[i];
    const double prev = prod;
    prod *= s.alpha_[i];
    s.alpha_bar_[i] = prod;
    s.beta_tilde_[i] = (1.0 - prev) / (1.0 - prod) * s.beta_[i];
    s.sigma_[i] = std::sqrt(s.beta_tilde_[i]);
  }
  return s;
}

void NoiseSchedule::check_step(int t) const {
  if (t < 1 || t > steps())
    throw std::out_of_range("NoiseSchedule: t=" + std::to_string(t) + " outside [1, " +
                            std::to_string(steps()) + "]");
}

ComplexImage forward_noise(const ComplexImage& x0, int t, const ComplexImage& eps,
                           const NoiseSchedule& sched) {
  if (!x0.same_shape(eps)) throw std::invalid_argument("forward_noise: shape mismatch");
  if (t < 1) throw std::out_of_range("forward_noise: t must be >= 1");
  const double ab = sched.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  ComplexImage out(x0.coils(), x0.height(), x0.width());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

ComplexImage x0_from_eps(const ComplexImage& x_t, int t, const ComplexImage& eps_hat,
                         const NoiseSchedule& sched) {
  if (!x_t.same_shape(eps_hat)) throw std::invalid_argument("x0_from_eps: shape mismatch");
  const double ab = sched.alpha_bar(t);
  if (ab < 1e-12) throw std::domain_error("x0_from_eps: alpha_bar below 1e-12 is singular");
  const double inv = 1.0 / std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  ComplexImage out(x_t.coils(), x_t.height(), x_t.width());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - b * eps_hat[i]) * inv;
  return out;
}

PosteriorStep posterior_step(int t, const NoiseSchedule& sched) {
  const double ab = sched.alpha_bar(t);
  return {std::sqrt(ab), std::sqrt(1.0 - ab), sched.sigma(t)};
}

}  // namespace dmsm
