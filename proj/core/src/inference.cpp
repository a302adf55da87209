#include "dmsm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace dmsm {

KSpaceData perturbed_measurements(const KSpaceData& y_u, const ComplexImage& eps_low, int t,
                                  const CoilSensitivities& coils, const NoiseSchedule& sched) {
  const double ab = sched.alpha_bar(t);
  KSpaceData y = undersample(fft2c(apply_coils(std::sqrt(1.0 - ab) * eps_low, coils)), y_u.mask);
  const double a = std::sqrt(ab);
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += a * y_u.data[i];
  return y;
}

std::vector<int> sampling_steps(int steps, int stride) {
  if (steps < 1) throw std::invalid_argument("sampling_steps: steps must be >= 1");
  if (stride < 1) throw std::invalid_argument("sampling_steps: stride must be >= 1");
  std::vector<int> ts;
  for (int t = steps; t >= 1; t -= stride) ts.push_back(t);
  if (ts.back() != 1) ts.push_back(1);
  return ts;
}

ComplexImage reverse_step(const ComplexImage& x_t, int t, const KSpaceData& y_u,
                          const CoilSensitivities& coils, const Model& model,
                          const NoiseSchedule& sched, Rng& rng, const InferenceOptions& options,
                          const ComplexImage* eps_low) {
  sched.check_step(t);
  const int h = x_t.height();
  const int w = x_t.width();
  BackboneOutput out;
  if (options.perturb_measurements) {
    const ComplexImage e =
        eps_low ? *eps_low : gaussian_image(1, h, w, rng, std::sqrt(options.eps_low_variance));
    const KSpaceData y_t = perturbed_measurements(y_u, e, t, coils, sched);
    out = backbone_reconstruct(x_t, y_t, coils, t, model, sched, options.backbone);
  } else {
    out = backbone_reconstruct(x_t, y_u, coils, t, model, sched, options.backbone);
  }
  const double sigma = sched.sigma(t);
  if (sigma > 0.0) {
    const ComplexImage z = gaussian_image(1, h, w, rng);
    for (std::size_t i = 0; i < z.size(); ++i) out.recon[i] += sigma * z[i];
  }
  return std::move(out.recon);
}

ComplexImage sample_path(const KSpaceData& y_u, const CoilSensitivities& coils, const Model& model,
                         const NoiseSchedule& sched, std::uint64_t seed,
                         const InferenceOptions& options) {
  Rng rng(seed);
  const int h = y_u.data.height();
  const int w = y_u.data.width();
  ComplexImage x = gaussian_image(1, h, w, rng);
  ComplexImage eps_low;
  if (!options.eps_low_per_step)
    eps_low = gaussian_image(1, h, w, rng, std::sqrt(options.eps_low_variance));
  for (int t : sampling_steps(sched.steps(), options.stride))
    x = reverse_step(x, t, y_u, coils, model, sched, rng, options,
                     options.eps_low_per_step ? nullptr : &eps_low);
  return x;
}

namespace {

struct Neumaier {
  double sum = 0.0;
  double comp = 0.0;
  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      comp += (sum - t) + v;
    else
      comp += (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

}  // namespace

MultiPathResult aggregate_paths(std::vector<ComplexImage> paths, std::vector<std::uint64_t> seeds) {
  if (paths.empty()) throw std::invalid_argument("aggregate_paths: need at least one path");
  if (seeds.size() != paths.size()) throw std::invalid_argument("aggregate_paths: seed count mismatch");
  for (const auto& p : paths)
    if (!p.same_shape(paths.front()) || p.coils() != 1)
      throw std::invalid_argument("aggregate_paths: path shape mismatch");

  std::vector<std::size_t> order(paths.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return seeds[a] < seeds[b]; });

  const auto& ref = paths.front();
  const double n = static_cast<double>(paths.size());
  MultiPathResult r;
  r.mean = ComplexImage(1, ref.height(), ref.width());
  r.std_map = RealImage(ref.height(), ref.width());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    Neumaier re, im, mag;
    for (auto k : order) {
      re.add(paths[k][i].real());
      im.add(paths[k][i].imag());
      mag.add(std::abs(paths[k][i]));
    }
    r.mean[i] = {re.value() / n, im.value() / n};
    const double mu = mag.value() / n;
    Neumaier sq;
    for (auto k : order) {
      const double d = std::abs(paths[k][i]) - mu;
      sq.add(d * d);
    }
    r.std_map.data[i] = std::sqrt(std::max(0.0, sq.value() / n));
  }
  r.paths = std::move(paths);
  r.seeds = std::move(seeds);
  return r;
}

int resolve_threads(int requested) {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("DMSM_NUM_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) n = v;
  }
  if (requested > 0) n = std::min(n, requested);
  return n;
}

MultiPathResult multipath_reconstruct(const KSpaceData& y_u, const CoilSensitivities& coils,
                                      const Model& model, const NoiseSchedule& sched, int n_paths,
                                      std::uint64_t base_seed, const InferenceOptions& options) {
  if (n_paths < 1) throw std::invalid_argument("multipath_reconstruct: N must be >= 1");
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n_paths));
  for (int i = 0; i < n_paths; ++i) seeds[i] = base_seed + static_cast<std::uint64_t>(i);
  std::vector<ComplexImage> paths(seeds.size());

  const int workers = std::min(resolve_threads(options.threads), n_paths);
  if (workers <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i)
      paths[i] = sample_path(y_u, coils, model, sched, seeds[i], options);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = static_cast<std::size_t>(w); i < seeds.size(); i += workers)
            paths[i] = sample_path(y_u, coils, model, sched, seeds[i], options);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return aggregate_paths(std::move(paths), std::move(seeds));
}

}  // namespace dmsm
