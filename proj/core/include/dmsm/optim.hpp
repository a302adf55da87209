#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dmsm/backbone.hpp"

namespace dmsm {

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update; `step` is the 1-based index of this update.
template <class T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
                 std::int64_t step, const AdamConfig& cfg);

struct AdamState {
  Model m;
  Model v;
  std::int64_t step = 0;

  static AdamState zeros(const nn::LhanConfig& config);
};

std::vector<std::span<Real>> parameter_spans(Model& model);
std::vector<std::span<const Real>> parameter_spans(const Model& model);

double global_norm(const Model& grad);
void scale_parameters(Model& grad, double factor);
void add_parameters(Model& dst, const Model& src);

/// Clips `grad` to global norm `max_norm` (<= 0 disables) and applies Adam.
/// Returns the pre-clip gradient norm.
double adam_step(Model& params, Model& grad, AdamState& state, const AdamConfig& cfg,
                 double max_norm);

}  // namespace dmsm
