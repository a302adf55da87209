#include "dmsm/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace dmsm {

namespace {

// Value and derivative of the chosen penalty on a complex residual.
double penalty(cplx r, ConsistencyNorm norm, cplx* grad) {
  if (norm == ConsistencyNorm::l2) {
    if (grad) *grad = 2.0 * r;
    return std::norm(r);
  }
  const double a = std::abs(r);
  if (grad) *grad = a > 0.0 ? r / a : cplx{};
  return a;
}

}  // namespace

double loss_dm(const ComplexImage& eps_true, std::span<const ComplexImage> eps_hat,
               std::vector<ComplexImage>* grads) {
  if (eps_hat.empty()) throw std::invalid_argument("loss_dm: no branches");
  for (const auto& e : eps_hat)
    if (!e.same_shape(eps_true)) throw std::invalid_argument("loss_dm: shape mismatch");
  const double n = 2.0 * static_cast<double>(eps_true.size());
  const double nb = static_cast<double>(eps_hat.size());
  if (grads) grads->clear();
  double total = 0.0;
  for (const auto& e : eps_hat) {
    double acc = 0.0;
    ComplexImage g;
    if (grads) g = ComplexImage(e.coils(), e.height(), e.width());
    for (std::size_t i = 0; i < e.size(); ++i) {
      const cplx d = e[i] - eps_true[i];
      acc += std::norm(d);
      if (grads) g[i] = d * (2.0 / (n * nb));
    }
    total += acc / n;
    if (grads) grads->push_back(std::move(g));
  }
  return total / nb;
}

double loss_ic(const ComplexImage& x_r, const ComplexImage& x_p1, const ComplexImage& x_p2,
               ConsistencyNorm norm, std::array<ComplexImage, 3>* grads) {
  if (!x_r.same_shape(x_p1) || !x_r.same_shape(x_p2))
    throw std::invalid_argument("loss_ic: shape mismatch");
  const double n = static_cast<double>(x_r.size());
  if (grads)
    for (auto& g : *grads) g = ComplexImage(x_r.coils(), x_r.height(), x_r.width());
  double acc = 0.0;
  const std::array<const ComplexImage*, 3> xs{&x_r, &x_p1, &x_p2};
  constexpr std::array<std::pair<int, int>, 3> pairs{{{0, 1}, {0, 2}, {1, 2}}};
  for (auto [a, b] : pairs) {
    double term = 0.0;
    for (std::size_t i = 0; i < x_r.size(); ++i) {
      cplx g;
      term += penalty((*xs[a])[i] - (*xs[b])[i], norm, grads ? &g : nullptr);
      if (grads) {
        (*grads)[a][i] += g / n;
        (*grads)[b][i] -= g / n;
      }
    }
    acc += term / n;
  }
  return acc;
}

double loss_kc(std::span<const ComplexImage> k_hat, const KSpaceData& y_u, ConsistencyNorm norm,
               std::vector<ComplexImage>* grads) {
  const auto& mask = y_u.mask;
  if (y_u.data.height() != mask.height() || y_u.data.width() != mask.width())
    throw std::invalid_argument("loss_kc: measurement/mask shape mismatch");
  for (const auto& k : k_hat)
    if (!k.same_shape(y_u.data)) throw std::invalid_argument("loss_kc: k-space shape mismatch");
  const double n = static_cast<double>(mask.count()) * y_u.data.coils();
  if (grads) grads->clear();
  if (n == 0.0) {
    if (grads)
      for (const auto& k : k_hat) grads->emplace_back(k.coils(), k.height(), k.width());
    return 0.0;
  }
  const auto px = mask.pixels();
  double acc = 0.0;
  for (const auto& k : k_hat) {
    ComplexImage g;
    if (grads) g = ComplexImage(k.coils(), k.height(), k.width());
    double term = 0.0;
    for (int c = 0; c < k.coils(); ++c) {
      auto kc = k.coil(c);
      auto yc = y_u.data.coil(c);
      for (std::size_t i = 0; i < px; ++i) {
        if (!mask[i]) continue;
        cplx d;
        term += penalty(kc[i] - yc[i], norm, grads ? &d : nullptr);
        if (grads) g.coil(c)[i] = d / n;
      }
    }
    acc += term / n;
    if (grads) grads->push_back(std::move(g));
  }
  return acc;
}

LossBreakdown total_loss(double dm, double ic, double kc, const LossWeights& w) {
  LossBreakdown b;
  b.dm = dm;
  b.ic = ic;
  b.kc = kc;
  b.dm_term = w.dm_multiplier * dm;
  b.ic_term = w.lambda_ic * ic;
  b.kc_term = w.lambda_kc * kc;
  b.total = b.ic_term + b.kc_term + b.dm_term;
  return b;
}

}  // namespace dmsm
