#pragma once

#include <cmath>
#include <complex>
#include <random>

#include "dmsm/kspace.hpp"
#include "dmsm/random.hpp"

namespace testing {

inline dmsm::ComplexImage random_image(int coils, int h, int w, std::uint64_t seed, double sd = 1.0) {
  dmsm::Rng rng(seed);
  return dmsm::gaussian_image(coils, h, w, rng, sd);
}

inline double max_abs_diff(const dmsm::ComplexImage& a, const dmsm::ComplexImage& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double rel_diff(const dmsm::ComplexImage& a, const dmsm::ComplexImage& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

inline dmsm::CoilSensitivities unit_coil(int h, int w) {
  dmsm::ComplexImage m(1, h, w);
  for (auto& v : m.data()) v = 1.0;
  return {m};
}

/// Random coil maps normalised pixelwise so that Σ|C|² = 1.
inline dmsm::CoilSensitivities random_coils(int n, int h, int w, std::uint64_t seed) {
  auto m = random_image(n, h, w, seed);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += std::norm(m(k, r, c));
      for (int k = 0; k < n; ++k) m(k, r, c) /= std::sqrt(s);
    }
  return {m};
}

}  // namespace testing
