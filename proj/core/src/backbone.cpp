#include "dmsm/backbone.hpp"

#include <cmath>
#include <stdexcept>

namespace dmsm {

ComplexImage dc_layer(const ComplexImage& x, const KSpaceData& y_ref, const CoilSensitivities& coils) {
  const auto& mask = y_ref.mask;
  if (y_ref.data.coils() != coils.coils() || !x.same_grid(y_ref.data))
    throw std::invalid_argument("dc_layer: shape mismatch");
  ComplexImage k = fft2c(apply_coils(x, coils));
  const auto px = k.pixels();
  for (int c = 0; c < k.coils(); ++c) {
    auto kc = k.coil(c);
    auto yc = y_ref.data.coil(c);
    for (std::size_t i = 0; i < px; ++i)
      if (mask[i]) kc[i] = yc[i];
  }
  return combine_coils(ifft2c(k), coils);
}

ComplexImage dc_layer_adjoint(const ComplexImage& grad, const SamplingMask& mask,
                              const CoilSensitivities& coils) {
  ComplexImage k = fft2c(apply_coils(grad, coils));
  const auto px = k.pixels();
  for (int c = 0; c < k.coils(); ++c) {
    auto kc = k.coil(c);
    for (std::size_t i = 0; i < px; ++i)
      if (mask[i]) kc[i] = cplx{};
  }
  return combine_coils(ifft2c(k), coils);
}

template <class T>
nn::FeatureMap<T> pack_input(const ComplexImage& x_t, const ComplexImage* cond) {
  if (x_t.coils() != 1) throw std::invalid_argument("pack_input: expected a single-coil image");
  if (cond && !cond->same_shape(x_t)) throw std::invalid_argument("pack_input: shape mismatch");
  nn::FeatureMap<T> f(4, x_t.height(), x_t.width());
  const auto px = x_t.pixels();
  for (std::size_t i = 0; i < px; ++i) {
    const auto p = static_cast<Eigen::Index>(i);
    f.data(0, p) = static_cast<T>(x_t[i].real());
    f.data(1, p) = static_cast<T>(x_t[i].imag());
    if (cond) {
      f.data(2, p) = static_cast<T>((*cond)[i].real());
      f.data(3, p) = static_cast<T>((*cond)[i].imag());
    }
  }
  return f;
}

template <class T>
ComplexImage unpack_output(const nn::FeatureMap<T>& out) {
  if (out.channels() != 2) throw std::invalid_argument("unpack_output: expected 2 channels");
  ComplexImage x(1, out.height, out.width);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto p = static_cast<Eigen::Index>(i);
    x[i] = {static_cast<double>(out.data(0, p)), static_cast<double>(out.data(1, p))};
  }
  return x;
}

template <class T>
nn::FeatureMap<T> pack_gradient(const ComplexImage& grad) {
  nn::FeatureMap<T> f(2, grad.height(), grad.width());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const auto p = static_cast<Eigen::Index>(i);
    f.data(0, p) = static_cast<T>(grad[i].real());
    f.data(1, p) = static_cast<T>(grad[i].imag());
  }
  return f;
}

template nn::FeatureMap<float> pack_input<float>(const ComplexImage&, const ComplexImage*);
template nn::FeatureMap<double> pack_input<double>(const ComplexImage&, const ComplexImage*);
template ComplexImage unpack_output<float>(const nn::FeatureMap<float>&);
template ComplexImage unpack_output<double>(const nn::FeatureMap<double>&);
template nn::FeatureMap<float> pack_gradient<float>(const ComplexImage&);
template nn::FeatureMap<double> pack_gradient<double>(const ComplexImage&);

BackboneOutput backbone_reconstruct(const ComplexImage& x_t, const KSpaceData& y,
                                    const CoilSensitivities& coils, int t, const Model& model,
                                    const NoiseSchedule& sched, const BackboneOptions& options,
                                    ModelCache* cache) {
  if (!x_t.same_grid(y.data) || y.data.coils() != coils.coils())
    throw std::invalid_argument("backbone_reconstruct: shape mismatch");
  sched.check_step(t);
  BackboneOutput out;
  nn::FeatureMap<Real> input;
  if (options.use_condition) {
    const ComplexImage cond = zero_fill_recon(y, coils);
    input = pack_input<Real>(x_t, &cond);
  } else {
    input = pack_input<Real>(x_t, nullptr);
  }
  out.eps_hat = unpack_output(nn::lhan_forward(model, input, t, sched.steps(), cache));
  out.x0_hat = x0_from_eps(x_t, t, out.eps_hat, sched);
  out.recon = options.use_dc ? dc_layer(out.x0_hat, y, coils) : out.x0_hat;
  return out;
}

void backbone_backward(const KSpaceData& y, const CoilSensitivities& coils, int t,
                       const Model& model, const NoiseSchedule& sched,
                       const BackboneOptions& options, const ModelCache& cache,
                       const ComplexImage& grad_eps, const ComplexImage& grad_recon, Model& grad) {
  const ComplexImage g_x0 = options.use_dc ? dc_layer_adjoint(grad_recon, y.mask, coils) : grad_recon;
  const double ab = sched.alpha_bar(t);
  const double coeff = -std::sqrt(1.0 - ab) / std::sqrt(ab);
  ComplexImage g_eps = grad_eps;
  for (std::size_t i = 0; i < g_eps.size(); ++i) g_eps[i] += coeff * g_x0[i];
  nn::lhan_backward(model, cache, pack_gradient<Real>(g_eps), grad);
}

}  // namespace dmsm
