#include "dmsm/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dmsm {

template <class T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
                 std::int64_t step, const AdamConfig& cfg) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size())
    throw std::invalid_argument("adam_update: size mismatch");
  if (step < 1) throw std::invalid_argument("adam_update: step must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double mhat = mi / bc1;
    const double vhat = vi / bc2;
    params[i] = static_cast<T>(params[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>,
                                 std::span<float>, std::int64_t, const AdamConfig&);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                  std::span<double>, std::int64_t, const AdamConfig&);

AdamState AdamState::zeros(const nn::LhanConfig& config) {
  return {Model::zeros(config), Model::zeros(config), 0};
}

std::vector<std::span<Real>> parameter_spans(Model& model) {
  std::vector<std::span<Real>> out;
  model.visit([&](const std::string&, std::span<Real> s, const std::vector<int>&) { out.push_back(s); });
  return out;
}

std::vector<std::span<const Real>> parameter_spans(const Model& model) {
  std::vector<std::span<const Real>> out;
  model.visit([&](const std::string&, auto s, const std::vector<int>&) {
    out.emplace_back(s.data(), s.size());
  });
  return out;
}

double global_norm(const Model& grad) {
  double acc = 0.0;
  for (auto s : parameter_spans(grad))
    for (Real v : s) acc += static_cast<double>(v) * v;
  return std::sqrt(acc);
}

void scale_parameters(Model& grad, double factor) {
  for (auto s : parameter_spans(grad))
    for (Real& v : s) v = static_cast<Real>(v * factor);
}

void add_parameters(Model& dst, const Model& src) {
  auto d = parameter_spans(dst);
  auto s = parameter_spans(src);
  if (d.size() != s.size()) throw std::invalid_argument("add_parameters: layout mismatch");
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (d[k].size() != s[k].size()) throw std::invalid_argument("add_parameters: layout mismatch");
    for (std::size_t i = 0; i < d[k].size(); ++i) d[k][i] += s[k][i];
  }
}

double adam_step(Model& params, Model& grad, AdamState& state, const AdamConfig& cfg,
                 double max_norm) {
  const double norm = global_norm(grad);
  if (max_norm > 0.0 && norm > max_norm) scale_parameters(grad, max_norm / norm);
  auto p = parameter_spans(params);
  auto g = parameter_spans(static_cast<const Model&>(grad));
  auto m = parameter_spans(state.m);
  auto v = parameter_spans(state.v);
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size())
    throw std::invalid_argument("adam_step: layout mismatch");
  ++state.step;
  for (std::size_t k = 0; k < p.size(); ++k) adam_update<Real>(p[k], g[k], m[k], v[k], state.step, cfg);
  return norm;
}

}  // namespace dmsm
