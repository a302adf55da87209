#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dmsm/lhan.hpp"

namespace testing {

struct GroupError {
  std::string name;
  std::size_t checked = 0;
  double rel = 0.0;
};

// Central differences of <lhan_forward(p, x), g> against lhan_backward, sampled per parameter group.
inline std::vector<GroupError> lhan_gradient_check(const dmsm::nn::LhanConfig& cfg, int size,
                                                   std::size_t per_group, std::uint64_t seed,
                                                   double h = 1e-3) {
  using namespace dmsm::nn;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  auto p = LhanParams<double>::zeros(cfg);
  randomize(p, seed + 1, 1.0);
  FeatureMap<double> x(cfg.in_channels, size, size), g(cfg.out_channels, size, size);
  for (Eigen::Index i = 0; i < x.data.size(); ++i) x.data.data()[i] = nd(rng);
  for (Eigen::Index i = 0; i < g.data.size(); ++i) g.data.data()[i] = nd(rng);
  const int t = 17, steps = 50;

  auto loss = [&] { return lhan_forward(p, x, t, steps).data.cwiseProduct(g.data).sum(); };

  LhanCache<double> cache;
  lhan_forward(p, x, t, steps, &cache);
  auto grad = LhanParams<double>::zeros(cfg);
  lhan_backward(p, cache, g, grad);

  std::vector<std::span<double>> ps, gs;
  std::vector<std::string> names;
  p.visit([&](const std::string& n, std::span<double> s, const std::vector<int>&) {
    names.push_back(n);
    ps.push_back(s);
  });
  grad.visit([&](const std::string&, std::span<double> s, const std::vector<int>&) { gs.push_back(s); });

  std::vector<GroupError> out;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const std::size_t n = ps[k].size();
    std::vector<std::size_t> idx;
    if (n <= per_group) {
      for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    } else {
      for (std::size_t j = 0; j < per_group; ++j)
        idx.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    }
    double num = 0.0, den = 0.0;
    for (auto i : idx) {
      const double orig = ps[k][i];
      ps[k][i] = orig + h;
      const double lp = loss();
      ps[k][i] = orig - h;
      const double lm = loss();
      ps[k][i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      num += (fd - gs[k][i]) * (fd - gs[k][i]);
      den += std::max(fd * fd, gs[k][i] * gs[k][i]);
    }
    out.push_back({names[k], idx.size(), den > 0.0 ? std::sqrt(num / den) : std::sqrt(num)});
  }
  return out;
}

}  // namespace testing
