#include "dmsm/random.hpp"

namespace dmsm {

ComplexImage gaussian_image(int coils, int height, int width, Rng& rng, double stddev) {
  ComplexImage x(coils, height, width);
  std::normal_distribution<double> nd(0.0, stddev);
  for (auto& v : x.data()) {
    const double re = nd(rng);
    const double im = nd(rng);
    v = {re, im};
  }
  return x;
}

}  // namespace dmsm
