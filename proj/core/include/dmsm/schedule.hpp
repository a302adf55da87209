#pragma once

#include <vector>

#include "dmsm/kspace.hpp"

namespace dmsm {

/// Diffusion variance tables indexed by t in [1, T]. alpha_bar(0) == 1.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  static NoiseSchedule linear(int steps, double beta_start, double beta_end);
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta(int t) const { return beta_[at(t)]; }
  double alpha(int t) const { return alpha_[at(t)]; }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bar_[at(t)]; }
  double beta_tilde(int t) const { return beta_tilde_[at(t)]; }
  double sigma(int t) const { return sigma_[at(t)]; }

  const std::vector<double>& betas() const { return beta_; }
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }
  const std::vector<double>& beta_tildes() const { return beta_tilde_; }

  void check_step(int t) const;

 private:
  std::size_t at(int t) const {
    check_step(t);
    return static_cast<std::size_t>(t - 1);
  }

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> beta_tilde_;
  std::vector<double> sigma_;
};

/// sqrt(ab_t) x0 + sqrt(1 - ab_t) eps
ComplexImage forward_noise(const ComplexImage& x0, int t, const ComplexImage& eps,
                           const NoiseSchedule& sched);

/// (x_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t); rejects ab_t < 1e-12.
ComplexImage x0_from_eps(const ComplexImage& x_t, int t, const ComplexImage& eps_hat,
                         const NoiseSchedule& sched);

struct PosteriorStep {
  double signal_scale;  ///< sqrt(ab_t)
  double noise_scale;   ///< sqrt(1 - ab_t)
  double sigma;         ///< sqrt(beta_tilde_t), zero at t = 1
};

PosteriorStep posterior_step(int t, const NoiseSchedule& sched);

}  // namespace dmsm
