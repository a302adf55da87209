#include "doctest.h"
#include "gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "dmsm/lhan.hpp"

using namespace dmsm::nn;
using doctest::Approx;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

FeatureMap<double> random_map(int c, int h, int w, std::uint64_t seed, double sd = 1.0) {
  FeatureMap<double> f(c, h, w);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sd);
  for (Eigen::Index i = 0; i < f.data.size(); ++i) f.data.data()[i] = nd(rng);
  return f;
}

}  // namespace

TEST_CASE("symmetric activation values") {
  CHECK(symmetric_activation(0.0) == 0.0);
  CHECK(symmetric_activation(4.0) == Approx(std::tanh(2.0) / 2.0).epsilon(1e-12));
  CHECK(symmetric_activation(1e6) == Approx(0.5));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const double x = nd(rng);
    CHECK(std::abs(symmetric_activation(-x) + symmetric_activation(x)) < 1e-12);
    CHECK(std::abs(symmetric_activation(x)) < 0.5);
  }
  std::vector<double> in{-1.0, 0.0, 2.0}, out(3);
  symmetric_activation<double>(in, out);
  CHECK(out[2] == Approx(sig(2.0) - 0.5));
  std::vector<double> bad(2);
  CHECK_THROWS_AS(symmetric_activation<double>(in, bad), std::invalid_argument);
}

TEST_CASE("PAB with zero weights on a zero input") {
  LhanConfig cfg;
  cfg.channels = 4;
  auto p = LhanParams<double>::zeros(cfg);
  const FeatureMap<double> x(4, 8, 8);
  const auto out = pab_forward<double>(p.pabs[0], x, nullptr);
  const double h = 0.5;
  const double v = sig(h) - 0.5;
  CHECK(v == Approx(0.122459331201855).epsilon(1e-12));
  for (Eigen::Index i = 0; i < out.data.size(); ++i)
    CHECK(out.data.data()[i] == Approx(0.0612296656009276).epsilon(1e-12));
}

TEST_CASE("PAB on a single pixel matches a scalar chain") {
  LhanConfig cfg;
  cfg.channels = 1;
  auto p = LhanParams<double>::zeros(cfg);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 1.5);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    auto& b = p.pabs[0];
    for (auto* conv : {&b.first, &b.second}) {
      for (Eigen::Index i = 0; i < conv->weight.size(); ++i) conv->weight.data()[i] = nd(rng);
      conv->bias(0) = nd(rng);
    }
    FeatureMap<double> x(1, 1, 1);
    x.data(0, 0) = nd(rng);
    const double o = x.data(0, 0);
    // only the kernel centre sees the pixel under zero padding
    const double w1 = b.first.weight(0, 4), w2 = b.second.weight(0, 4);
    const double a1 = sig(w1 * o + b.first.bias(0));
    const double h = sig(w2 * a1 + b.second.bias(0));
    const double v = sig(h) - 0.5;
    const double expect = (o + h) * v;
    worst = std::max(worst, std::abs(pab_forward<double>(b, x, nullptr).data(0, 0) - expect));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("PAB attention stays below one half") {
  LhanConfig cfg;
  cfg.channels = 6;
  auto p = LhanParams<double>::zeros(cfg);
  randomize(p, 5, 3.0);
  PabCache<double> cache;
  pab_forward<double>(p.pabs[1], random_map(6, 12, 10, 8, 10.0), &cache);
  CHECK(cache.v.cwiseAbs().maxCoeff() < 0.5);
}

TEST_CASE("PAB rejects mismatched channels") {
  LhanConfig cfg;
  cfg.channels = 4;
  auto p = LhanParams<double>::zeros(cfg);
  CHECK_THROWS_AS(pab_forward<double>(p.pabs[0], FeatureMap<double>(3, 8, 8), nullptr), std::invalid_argument);
}

TEST_CASE("time embedding") {
  LhanConfig cfg;
  auto p = LhanParams<double>::zeros(cfg);
  const auto z = time_embed<double>(7, 50, p.time_mlp, nullptr);
  CHECK(z.size() == 32);
  CHECK(z.cwiseAbs().maxCoeff() == 0.0);
  initialize(p, 11);
  const auto a = time_embed<double>(7, 50, p.time_mlp, nullptr);
  const auto b = time_embed<double>(7, 50, p.time_mlp, nullptr);
  const auto c = time_embed<double>(8, 50, p.time_mlp, nullptr);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.allFinite());
  CHECK_THROWS_AS(time_embed<double>(0, 50, p.time_mlp, nullptr), std::out_of_range);
  CHECK_THROWS_AS(time_embed<double>(51, 50, p.time_mlp, nullptr), std::out_of_range);
}

TEST_CASE("CATB single key token gives unit attention weights") {
  LhanConfig cfg;
  cfg.channels = 8;
  auto p = LhanParams<double>::zeros(cfg);
  randomize(p, 2, 1.0);
  Vector<double> w = Vector<double>::Random(cfg.time_dim);
  CatbCache<double> cache;
  catb_forward<double>(p.catb, random_map(8, 8, 8, 1), w, &cache);
  CHECK(cache.weights.cols() == 1);
  for (Eigen::Index i = 0; i < cache.weights.rows(); ++i) CHECK(cache.weights(i, 0) == 1.0);
}

TEST_CASE("CATB with a zero scale projection is the identity") {
  LhanConfig cfg;
  cfg.channels = 8;
  auto p = LhanParams<double>::zeros(cfg);
  randomize(p, 3, 1.0);
  p.catb.scale.weight.setZero();
  p.catb.scale.bias.setZero();
  const auto x = random_map(8, 8, 8, 2);
  const auto out = catb_forward<double>(p.catb, x, Vector<double>::Random(cfg.time_dim), nullptr);
  CHECK(out.data == x.data);
}

TEST_CASE("CATB passes constant channels through the guard") {
  LhanConfig cfg;
  cfg.channels = 4;
  auto p = LhanParams<double>::zeros(cfg);
  randomize(p, 4, 1.0);
  FeatureMap<double> x(4, 8, 8);
  for (int k = 0; k < 4; ++k) x.data.row(k).setConstant(0.25 * (k + 1));
  CatbCache<double> cache;
  const auto out = catb_forward<double>(p.catb, x, Vector<double>::Random(cfg.time_dim), &cache);
  for (int k = 0; k < 4; ++k) CHECK(cache.guarded[static_cast<std::size_t>(k)]);
  CHECK(out.data == x.data);
}

TEST_CASE("positional encoding is bounded and position dependent") {
  const auto& pe = positional_encoding<double>(6, 64);
  CHECK(pe.rows() == 6);
  CHECK(pe.cols() == 64);
  CHECK(pe.cwiseAbs().maxCoeff() <= 1.0);
  CHECK(pe.col(0) != pe.col(1));
}

TEST_CASE("network preserves spatial size") {
  LhanConfig cfg;
  auto p = LhanParams<float>::zeros(cfg);
  initialize(p, 1);
  randomize(p, 9, 0.5f);
  for (int s : {16, 32, 64}) {
    FeatureMap<float> x(4, s, s);
    x.data.setRandom();
    const auto out = lhan_forward(p, x, 3, 50);
    CHECK(out.channels() == 2);
    CHECK(out.height == s);
    CHECK(out.width == s);
    CHECK(out.data.allFinite());
  }
  CHECK_THROWS_AS(lhan_forward(p, FeatureMap<float>(3, 16, 16), 3, 50), std::invalid_argument);
}

TEST_CASE("freshly initialised network predicts zero noise") {
  LhanConfig cfg;
  auto p = LhanParams<float>::zeros(cfg);
  initialize(p, 1);
  FeatureMap<float> x(4, 16, 16);
  x.data.setRandom();
  CHECK(lhan_forward(p, x, 10, 50).data.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("default parameter count stays below one million") {
  const auto p = LhanParams<float>::zeros(LhanConfig{});
  const auto n = p.parameter_count();
  std::printf("default LHAN parameter count: %zu\n", n);
  CHECK(n > 0);
  CHECK(n < 1000000);
}

TEST_CASE("configuration validation") {
  LhanConfig cfg;
  cfg.concat_blocks = {0, 3};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.concat_blocks = {1, 7, 1};
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.active_concat_blocks() == std::vector<int>{1});
  cfg = {};
  cfg.n_pab = 0;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.active_concat_blocks() == std::vector<int>{0});
  cfg = {};
  cfg.kernel = 2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("full-network gradient matches central differences at 8x8") {
  const auto errs = testing::lhan_gradient_check(LhanConfig{}, 8, 6, 21);
  CHECK(errs.size() > 20);
  for (const auto& e : errs) {
    INFO(e.name);
    CHECK(e.rel < 1e-2);
  }
}
