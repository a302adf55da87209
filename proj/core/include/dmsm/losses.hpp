#pragma once

#include <array>
#include <span>
#include <vector>

#include "dmsm/kspace.hpp"

namespace dmsm {

enum class ConsistencyNorm { l1, l2 };

struct LossWeights {
  double lambda_ic = 1.0;
  double lambda_kc = 5.0;
  double dm_multiplier = 3.0;
};

enum Branch : std::size_t { kFull = 0, kPart1 = 1, kPart2 = 2 };

/// Raw component values plus their weighted contributions.
struct LossBreakdown {
  double dm = 0.0;
  double ic = 0.0;
  double kc = 0.0;
  double dm_term = 0.0;
  double ic_term = 0.0;
  double kc_term = 0.0;
  double total = 0.0;
};

/// Mean over branches of the per-channel MSE between eps_true and eps_hat.
/// grads (optional) receives dL/d(eps_hat) per branch.
double loss_dm(const ComplexImage& eps_true, std::span<const ComplexImage> eps_hat,
               std::vector<ComplexImage>* grads = nullptr);

/// |x_r - x_p1| + |x_r - x_p2| + |x_p1 - x_p2|, each mean-reduced over pixels.
double loss_ic(const ComplexImage& x_r, const ComplexImage& x_p1, const ComplexImage& x_p2,
               ConsistencyNorm norm = ConsistencyNorm::l1,
               std::array<ComplexImage, 3>* grads = nullptr);

/// Σ_b mean over sampled entries of |k_b - y_u|; k_b is full-grid multi-coil
/// k-space and only the locations in y_u.mask contribute.
double loss_kc(std::span<const ComplexImage> k_hat, const KSpaceData& y_u,
               ConsistencyNorm norm = ConsistencyNorm::l1,
               std::vector<ComplexImage>* grads = nullptr);

/// λ_IC L_IC + λ_KC L_KC + m L_DM.
LossBreakdown total_loss(double dm, double ic, double kc, const LossWeights& weights);

}  // namespace dmsm
