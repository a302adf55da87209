#include "doctest.h"
#include "helpers.hpp"

#include "dmsm/losses.hpp"

using namespace dmsm;
using doctest::Approx;
using testing::random_image;

namespace {

ComplexImage shifted(const ComplexImage& x, cplx d) {
  ComplexImage y = x;
  for (auto& v : y.data()) v += d;
  return y;
}

}  // namespace

TEST_CASE("L_DM basic values") {
  const auto e = random_image(1, 8, 8, 1);
  std::vector<ComplexImage> same{e, e, e};
  CHECK(loss_dm(e, same) == 0.0);
  std::vector<ComplexImage> off{shifted(e, 1.0), shifted(e, cplx(0.0, 1.0))};
  CHECK(loss_dm(e, off) == Approx(0.5).epsilon(1e-14));
  std::vector<ComplexImage> both{shifted(e, cplx(1.0, 1.0))};
  CHECK(loss_dm(e, both) == Approx(1.0).epsilon(1e-14));
}

TEST_CASE("L_DM against an elementwise oracle") {
  const auto e = random_image(1, 8, 8, 2);
  std::vector<ComplexImage> hats{random_image(1, 8, 8, 3), random_image(1, 8, 8, 4), random_image(1, 8, 8, 5)};
  double oracle = 0.0;
  for (const auto& h : hats) {
    double s = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double dr = h[i].real() - e[i].real();
      const double di = h[i].imag() - e[i].imag();
      s += dr * dr + di * di;
    }
    oracle += s / (2.0 * e.size());
  }
  oracle /= 3.0;
  CHECK(std::abs(loss_dm(e, hats) - oracle) < 1e-10);
  std::vector<ComplexImage> bad{ComplexImage(1, 4, 4)};
  CHECK_THROWS_AS(loss_dm(e, bad), std::invalid_argument);
}

TEST_CASE("L_IC basic values") {
  const auto x = random_image(1, 8, 8, 6);
  CHECK(loss_ic(x, x, x) == 0.0);
  CHECK(loss_ic(x, x, shifted(x, 1.0)) == Approx(2.0).epsilon(1e-14));
  CHECK(loss_ic(x, x, shifted(x, 1.0), ConsistencyNorm::l2) == Approx(2.0).epsilon(1e-14));
  CHECK_THROWS_AS(loss_ic(x, x, ComplexImage(1, 4, 4)), std::invalid_argument);
}

TEST_CASE("L_IC is non-negative and symmetric in the partitions") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = random_image(1, 8, 8, 10 * s), b = random_image(1, 8, 8, 10 * s + 1),
               c = random_image(1, 8, 8, 10 * s + 2);
    const double v = loss_ic(a, b, c);
    CHECK(v >= 0.0);
    CHECK(std::abs(v - loss_ic(a, c, b)) < 1e-12);
  }
}

namespace {

KSpaceData measured(std::uint64_t seed) {
  auto m = generate_vd_mask(16, 16, 3.0, 2, seed);
  return undersample(random_image(2, 16, 16, seed), m);
}

}  // namespace

TEST_CASE("L_KC basic values") {
  const auto y = measured(1);
  std::vector<ComplexImage> exact{y.data, y.data, y.data};
  CHECK(loss_kc(exact, y) == 0.0);

  std::vector<ComplexImage> one = exact;
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < y.mask.pixels(); ++i)
      if (y.mask[i]) one[0].coil(c)[i] += 1.0;
  CHECK(loss_kc(one, y) == Approx(1.0).epsilon(1e-14));
}

TEST_CASE("L_KC ignores unsampled locations") {
  const auto y = measured(2);
  std::vector<ComplexImage> k{random_image(2, 16, 16, 3), random_image(2, 16, 16, 4), random_image(2, 16, 16, 5)};
  const double before = loss_kc(k, y);
  for (auto& kb : k)
    for (int c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < y.mask.pixels(); ++i)
        if (!y.mask[i]) kb.coil(c)[i] = cplx(1e3, -7.0);
  CHECK(loss_kc(k, y) == before);
  std::vector<ComplexImage> bad{ComplexImage(1, 16, 16)};
  CHECK_THROWS_AS(loss_kc(bad, y), std::invalid_argument);
}

TEST_CASE("loss gradients match finite differences") {
  const auto y = measured(3);
  const auto e = random_image(1, 16, 16, 6);
  std::vector<ComplexImage> k{random_image(2, 16, 16, 7), random_image(2, 16, 16, 8)};
  std::vector<ComplexImage> hats{random_image(1, 16, 16, 9)};
  std::array<ComplexImage, 3> xs{random_image(1, 16, 16, 10), random_image(1, 16, 16, 11), random_image(1, 16, 16, 12)};

  std::vector<ComplexImage> gk, ge;
  std::array<ComplexImage, 3> gx;
  loss_kc(k, y, ConsistencyNorm::l1, &gk);
  loss_dm(e, hats, &ge);
  loss_ic(xs[0], xs[1], xs[2], ConsistencyNorm::l1, &gx);

  const double h = 1e-6;
  std::size_t i = 0;
  while (!y.mask[i]) ++i;
  for (const cplx dir : {cplx(1.0, 0.0), cplx(0.0, 1.0)}) {
    auto kp = k, km = k;
    kp[1].coil(1)[i] += h * dir;
    km[1].coil(1)[i] -= h * dir;
    const double fd = (loss_kc(kp, y) - loss_kc(km, y)) / (2 * h);
    const cplx g = gk[1].coil(1)[i];
    CHECK(fd == Approx(dir.real() != 0 ? g.real() : g.imag()).epsilon(1e-5));

    auto hp = hats, hm = hats;
    hp[0][5] += h * dir;
    hm[0][5] -= h * dir;
    const double fe = (loss_dm(e, hp) - loss_dm(e, hm)) / (2 * h);
    CHECK(fe == Approx(dir.real() != 0 ? ge[0][5].real() : ge[0][5].imag()).epsilon(1e-5));

    auto xp = xs, xm = xs;
    xp[2][9] += h * dir;
    xm[2][9] -= h * dir;
    const double fi = (loss_ic(xp[0], xp[1], xp[2]) - loss_ic(xm[0], xm[1], xm[2])) / (2 * h);
    CHECK(fi == Approx(dir.real() != 0 ? gx[2][9].real() : gx[2][9].imag()).epsilon(1e-5));
  }
}

TEST_CASE("total loss weighting") {
  CHECK(total_loss(0, 0, 0, {}).total == 0.0);
  const auto b = total_loss(1, 1, 1, {});
  CHECK(b.total == 9.0);
  CHECK(b.ic_term == 1.0);
  CHECK(b.kc_term == 5.0);
  CHECK(b.dm_term == 3.0);
  LossWeights w;
  w.lambda_kc *= 2.0;
  const auto c = total_loss(0.3, 0.7, 0.11, w);
  const auto d = total_loss(0.3, 0.7, 0.11, {});
  CHECK(c.kc_term == 2.0 * d.kc_term);
  CHECK(c.ic_term == d.ic_term);
  CHECK(c.dm_term == d.dm_term);
  CHECK(c.kc == d.kc);
}
