#include "doctest.h"
#include "helpers.hpp"

#include "dmsm/backbone.hpp"
#include "dmsm/data.hpp"
#include "dmsm/metrics.hpp"

using namespace dmsm;
using testing::max_abs_diff;
using testing::random_image;

TEST_CASE("DC layer with an empty mask is the identity") {
  const auto C = testing::unit_coil(16, 16);
  const auto x = random_image(1, 16, 16, 1);
  const KSpaceData y{ComplexImage(1, 16, 16), SamplingMask::zeros(16, 16)};
  CHECK(max_abs_diff(dc_layer(x, y, C), x) < 1e-12);
}

TEST_CASE("DC layer with a full mask returns the measurement") {
  const auto C = testing::unit_coil(16, 16);
  const auto x = random_image(1, 16, 16, 2);
  const KSpaceData y{random_image(1, 16, 16, 3), SamplingMask::full(16, 16)};
  CHECK(max_abs_diff(dc_layer(x, y, C), ifft2c(y.data)) < 1e-12);
}

TEST_CASE("DC layer is idempotent and enforces the measurements") {
  const auto C = testing::unit_coil(32, 32);
  const auto m = generate_vd_mask(32, 32, 4.0, 4, 3);
  const auto y = undersample(random_image(1, 32, 32, 4), m);
  const auto x = random_image(1, 32, 32, 5);
  const auto once = dc_layer(x, y, C);
  CHECK(max_abs_diff(dc_layer(once, y, C), once) < 1e-8);
  const auto k = fft2c(once);
  for (std::size_t i = 0; i < m.pixels(); ++i)
    if (m[i]) CHECK(std::abs(k[i] - y.data[i]) < 1e-8);
}

TEST_CASE("DC adjoint matches the linear part") {
  const auto C = testing::random_coils(3, 16, 16, 6);
  const auto m = generate_vd_mask(16, 16, 3.0, 2, 7);
  const KSpaceData zero{ComplexImage(3, 16, 16), m};
  const auto a = random_image(1, 16, 16, 8);
  const auto b = random_image(1, 16, 16, 9);
  const cplx lhs = inner(dc_layer(a, zero, C), b);
  const cplx rhs = inner(a, dc_layer_adjoint(b, m, C));
  CHECK(std::abs(lhs - rhs) < 1e-10);
}

TEST_CASE("DC layer shape checks") {
  const auto C = testing::unit_coil(16, 16);
  const KSpaceData y{ComplexImage(1, 16, 16), SamplingMask::zeros(16, 16)};
  CHECK_THROWS_AS(dc_layer(random_image(1, 8, 8, 1), y, C), std::invalid_argument);
  CHECK_THROWS_AS(dc_layer(random_image(1, 16, 16, 1), y, testing::random_coils(2, 16, 16, 1)),
                  std::invalid_argument);
}

namespace {

struct Fixture {
  ComplexImage gt = make_phantom(32, 32, 4);
  CoilSensitivities C = make_coil_maps(32, 32, 4);
  SamplingMask mask = generate_vd_mask(32, 32, 4.0, 6, 2);
  KSpaceData y = undersample(fft2c(apply_coils(gt, C)), mask);
  NoiseSchedule sched = NoiseSchedule::linear(50, 1e-4, 0.02);
};

}  // namespace

TEST_CASE("backbone output is data consistent") {
  const auto C = testing::unit_coil(32, 32);
  const auto mask = generate_vd_mask(32, 32, 4.0, 6, 2);
  const auto y = undersample(fft2c(make_phantom(32, 32, 4)), mask);
  const auto sched = NoiseSchedule::linear(50, 1e-4, 0.02);
  Model m = Model::zeros(nn::LhanConfig{});
  nn::initialize(m, 3);
  nn::randomize(m, 4, 0.3f);
  const auto x_t = random_image(1, 32, 32, 10);
  const auto out = backbone_reconstruct(x_t, y, C, 20, m, sched);
  const auto k = fft2c(apply_coils(out.recon, C));
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < mask.pixels(); ++i)
    if (mask[i]) {
      worst = std::max(worst, std::abs(k[i] - y.data[i]));
      scale = std::max(scale, std::abs(y.data[i]));
    }
  CHECK(worst <= 1e-6 * scale);
  CHECK_THROWS_AS(backbone_reconstruct(x_t, y, C, 0, m, sched), std::out_of_range);
}

TEST_CASE("multi-coil DC keeps a consistent image fixed") {
  Fixture f;
  const auto out = dc_layer(f.gt, f.y, f.C);
  CHECK(max_abs_diff(out, f.gt) < 1e-10);
}

TEST_CASE("untrained backbone gives a finite reconstruction") {
  Fixture f;
  Model m = Model::zeros(nn::LhanConfig{});
  nn::initialize(m, 8);
  nn::randomize(m, 9, 0.5f);
  const auto out = backbone_reconstruct(random_image(1, 32, 32, 11), f.y, f.C, 35, m, f.sched);
  CHECK_NOTHROW(out.recon.validate());
  CHECK(std::isfinite(psnr(out.recon, f.gt)));
}

TEST_CASE("an oracle noise estimate reproduces DC of the clean image") {
  Fixture f;
  const int t = 12;
  const auto eps = random_image(1, 32, 32, 12);
  const auto x_t = forward_noise(f.gt, t, eps, f.sched);
  const auto x0 = x0_from_eps(x_t, t, eps, f.sched);
  CHECK(max_abs_diff(x0, f.gt) < 1e-10);
  CHECK(max_abs_diff(dc_layer(x0, f.y, f.C), dc_layer(f.gt, f.y, f.C)) < 1e-10);
}

TEST_CASE("backbone gradient matches finite differences") {
  Fixture f;
  const int t = 30;
  nn::LhanConfig cfg;
  cfg.channels = 8;
  cfg.mlp_layers = 2;
  Model m = Model::zeros(cfg);
  nn::randomize(m, 2, 0.5f);
  const auto x_t = random_image(1, 32, 32, 13);
  const auto ge = random_image(1, 32, 32, 14, 0.01);
  const auto gr = random_image(1, 32, 32, 15, 0.01);
  auto loss = [&](const Model& q) {
    const auto o = backbone_reconstruct(x_t, f.y, f.C, t, q, f.sched);
    return real_inner(o.eps_hat, ge) + real_inner(o.recon, gr);
  };
  ModelCache cache;
  backbone_reconstruct(x_t, f.y, f.C, t, m, f.sched, {}, &cache);
  Model grad = Model::zeros(cfg);
  backbone_backward(f.y, f.C, t, m, f.sched, {}, cache, ge, gr, grad);
  // the head bias moves eps_hat uniformly, so its gradient is well conditioned in float
  for (int k = 0; k < 2; ++k) {
    const float orig = m.head.bias(k);
    const float h = 1e-2f;
    m.head.bias(k) = orig + h;
    const double lp = loss(m);
    m.head.bias(k) = orig - h;
    const double lm = loss(m);
    m.head.bias(k) = orig;
    const double fd = (lp - lm) / (2.0 * h);
    CHECK(fd == doctest::Approx(grad.head.bias(k)).epsilon(2e-2));
  }
}

TEST_CASE("input packing layout") {
  const auto x = random_image(1, 8, 8, 16);
  const auto c = random_image(1, 8, 8, 17);
  const auto f = pack_input<double>(x, &c);
  CHECK(f.channels() == 4);
  CHECK(f.data(0, 9) == x[9].real());
  CHECK(f.data(1, 9) == x[9].imag());
  CHECK(f.data(2, 9) == c[9].real());
  CHECK(f.data(3, 9) == c[9].imag());
  const auto g = pack_input<double>(x, nullptr);
  CHECK(g.data.row(2).cwiseAbs().maxCoeff() == 0.0);
  nn::FeatureMap<double> o(2, 8, 8);
  o.data = f.data.topRows(2);
  CHECK(max_abs_diff(unpack_output(o), x) == 0.0);
}
