#include "doctest.h"
#include "helpers.hpp"

#include "dmsm/schedule.hpp"

using namespace dmsm;
using doctest::Approx;

TEST_CASE("single-step schedule") {
  const auto s = NoiseSchedule::linear(1, 0.1, 0.1);
  CHECK(s.steps() == 1);
  CHECK(s.alpha_bar(1) == Approx(0.9).epsilon(1e-15));
  CHECK(s.beta_tilde(1) == 0.0);
  CHECK(s.sigma(1) == 0.0);
}

TEST_CASE("cumulative products from explicit betas") {
  const auto s = NoiseSchedule::from_betas({0.1, 0.2, 0.3});
  CHECK(s.alpha_bar(1) == Approx(0.9).epsilon(1e-14));
  CHECK(s.alpha_bar(2) == Approx(0.72).epsilon(1e-14));
  CHECK(s.alpha_bar(3) == Approx(0.504).epsilon(1e-14));
  CHECK(s.alpha(3) == Approx(0.7).epsilon(1e-14));
}

TEST_CASE("posterior variance by hand") {
  const auto s = NoiseSchedule::from_betas({0.1, 0.2});
  CHECK(s.beta_tilde(2) == Approx(0.1 / 0.28 * 0.2).epsilon(1e-13));
  CHECK(s.beta_tilde(2) == Approx(0.0714285714285714).epsilon(1e-12));
  CHECK(s.sigma(2) == Approx(0.267261241912424).epsilon(1e-12));
  CHECK(posterior_step(1, s).sigma == 0.0);
  CHECK(posterior_step(2, s).sigma == Approx(0.267261241912424).epsilon(1e-12));
}

TEST_CASE("linear schedule invariants against an independent recomputation") {
  for (int T : {1, 2, 50, 1000}) {
    const auto s = NoiseSchedule::linear(T, 1e-4, 0.02);
    double ab = 1.0;
    double prev_ab = 1.0;
    for (int t = 1; t <= T; ++t) {
      const double beta = T == 1 ? 1e-4 : 1e-4 + (0.02 - 1e-4) * (t - 1) / (T - 1);
      CHECK(s.beta(t) == Approx(beta).epsilon(1e-12));
      if (t > 1) CHECK(s.beta(t) > s.beta(t - 1));
      ab *= 1.0 - beta;
      CHECK(std::abs(s.alpha_bar(t) - ab) < 1e-12);
      CHECK(s.alpha_bar(t) < prev_ab);
      const double bt = t == 1 ? 0.0 : (1.0 - prev_ab) / (1.0 - ab) * beta;
      CHECK(std::abs(s.beta_tilde(t) - bt) < 1e-12);
      CHECK(s.beta_tilde(t) >= 0.0);
      CHECK(s.beta_tilde(t) <= s.beta(t));
      CHECK(s.sigma(t) * s.sigma(t) <= s.beta(t) + 1e-15);
      prev_ab = ab;
    }
  }
}

TEST_CASE("schedule construction errors") {
  CHECK_THROWS_AS(NoiseSchedule::linear(0, 1e-4, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.0, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.03, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 1e-4, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(NoiseSchedule::from_betas({}), std::invalid_argument);
  CHECK_THROWS_AS(NoiseSchedule::from_betas({0.1, 1.2}), std::invalid_argument);
  const auto s = NoiseSchedule::linear(10, 1e-4, 0.02);
  CHECK_THROWS_AS(s.beta(0), std::out_of_range);
  CHECK_THROWS_AS(s.sigma(11), std::out_of_range);
  CHECK(s.alpha_bar(0) == 1.0);
}

TEST_CASE("forward_noise") {
  const auto s = NoiseSchedule::linear(50, 1e-4, 0.02);
  const auto x0 = testing::random_image(1, 8, 8, 1);
  const ComplexImage zero(1, 8, 8);
  const auto out = forward_noise(x0, 20, zero, s);
  CHECK(testing::max_abs_diff(out, std::sqrt(s.alpha_bar(20)) * x0) == 0.0);
  CHECK_THROWS_AS(forward_noise(x0, 0, zero, s), std::out_of_range);
  CHECK_THROWS_AS(forward_noise(x0, 51, zero, s), std::out_of_range);
  CHECK_THROWS_AS(forward_noise(x0, 3, ComplexImage(1, 8, 10), s), std::invalid_argument);
}

TEST_CASE("forward_noise tends to eps when alpha_bar vanishes") {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  const auto x0 = testing::random_image(1, 8, 8, 2);
  const auto eps = testing::random_image(1, 8, 8, 3);
  const auto out = forward_noise(x0, 1000, eps, s);
  const double ab = s.alpha_bar(1000);
  const double bound = std::sqrt(ab) * x0.norm() / eps.norm() + (1.0 - std::sqrt(1.0 - ab));
  CHECK((out - eps).norm() / eps.norm() < bound + 1e-12);
  CHECK(s.alpha_bar(1000) < 1e-4);
}

TEST_CASE("forward_noise Monte-Carlo moments") {
  const auto s = NoiseSchedule::linear(50, 1e-4, 0.02);
  const int t = 30;
  const double x0 = 0.8;
  const int n = 100000;
  Rng rng(17);
  ComplexImage xi(1, 8, 8);
  xi[0] = x0;
  double m = 0.0, q = 0.0;
  for (int i = 0; i < n; ++i) {
    ComplexImage e(1, 8, 8);
    e[0] = std::normal_distribution<double>(0.0, 1.0)(rng);
    const double v = forward_noise(xi, t, e, s)[0].real();
    m += v;
    q += v * v;
  }
  m /= n;
  const double var = q / n - m * m;
  const double mu = std::sqrt(s.alpha_bar(t)) * x0;
  const double sd = std::sqrt(1.0 - s.alpha_bar(t));
  CHECK(std::abs(m - mu) < 3.0 * sd / std::sqrt(n));
  // standard error of the sample variance of a Gaussian: var * sqrt(2 / n)
  CHECK(std::abs(var - sd * sd) < 3.0 * sd * sd * std::sqrt(2.0 / n));
}

TEST_CASE("x0_from_eps inverts forward_noise") {
  const auto s = NoiseSchedule::linear(50, 1e-4, 0.02);
  const auto x0 = testing::random_image(1, 8, 8, 4);
  const auto eps = testing::random_image(1, 8, 8, 5);
  CHECK(testing::max_abs_diff(x0_from_eps(forward_noise(x0, 17, eps, s), 17, eps, s), x0) < 1e-10);
  const ComplexImage zero(1, 8, 8);
  const auto xt = testing::random_image(1, 8, 8, 6);
  CHECK(testing::max_abs_diff(x0_from_eps(xt, 9, zero, s), (1.0 / std::sqrt(s.alpha_bar(9))) * xt) < 1e-15);

  Rng rng(7);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const int t = std::uniform_int_distribution<int>(1, 50)(rng);
    const auto a = gaussian_image(1, 8, 8, rng, 3.0);
    const auto e = gaussian_image(1, 8, 8, rng);
    worst = std::max(worst, testing::max_abs_diff(x0_from_eps(forward_noise(a, t, e, s), t, e, s), a));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("x0_from_eps rejects a numerically singular step") {
  const auto s = NoiseSchedule::from_betas({0.999999, 0.999999, 0.999999});
  const ComplexImage x(1, 8, 8);
  CHECK(s.alpha_bar(3) < 1e-12);
  CHECK_THROWS_AS(x0_from_eps(x, 3, x, s), std::domain_error);
}
