#pragma once

#include "dmsm/kspace.hpp"
#include "dmsm/lhan.hpp"
#include "dmsm/schedule.hpp"

namespace dmsm {

/// Scalar type of the trained network. The k-space algebra stays in double.
using Real = float;
using Model = nn::LhanParams<Real>;
using ModelCache = nn::LhanCache<Real>;

struct BackboneOptions {
  bool use_dc = true;         ///< DC projection after the x0 estimate
  bool use_condition = true;  ///< zero-filled image as extra input channels
};

/// x_out = S^H F^-1 [ F(S x) (1 - M) + y_ref M ], M = y_ref.mask.
ComplexImage dc_layer(const ComplexImage& x, const KSpaceData& y_ref, const CoilSensitivities& coils);

/// Linear part of dc_layer, which is self-adjoint: S^H F^-1 (1 - M) F S g.
ComplexImage dc_layer_adjoint(const ComplexImage& grad, const SamplingMask& mask,
                              const CoilSensitivities& coils);

/// [Re x_t, Im x_t, Re cond, Im cond] (cond channels zero when unused).
template <class T>
nn::FeatureMap<T> pack_input(const ComplexImage& x_t, const ComplexImage* cond);

template <class T>
ComplexImage unpack_output(const nn::FeatureMap<T>& out);

template <class T>
nn::FeatureMap<T> pack_gradient(const ComplexImage& grad);

struct BackboneOutput {
  ComplexImage eps_hat;
  ComplexImage x0_hat;
  ComplexImage recon;  ///< x̂_r
};

/// R_θ: eps_hat = LHAN([x_t, zero_fill(y)], t); x0 from eps; DC against y.
BackboneOutput backbone_reconstruct(const ComplexImage& x_t, const KSpaceData& y,
                                    const CoilSensitivities& coils, int t, const Model& model,
                                    const NoiseSchedule& sched, const BackboneOptions& options = {},
                                    ModelCache* cache = nullptr);

/// Gradient of a loss through R_θ given dL/d(eps_hat) and dL/d(recon);
/// accumulates into `grad`.
void backbone_backward(const KSpaceData& y, const CoilSensitivities& coils, int t,
                       const Model& model, const NoiseSchedule& sched,
                       const BackboneOptions& options, const ModelCache& cache,
                       const ComplexImage& grad_eps, const ComplexImage& grad_recon, Model& grad);

}  // namespace dmsm
