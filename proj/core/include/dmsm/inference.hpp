#pragma once

#include <cstdint>
#include <vector>

#include "dmsm/backbone.hpp"
#include "dmsm/metrics.hpp"
#include "dmsm/random.hpp"

namespace dmsm {

struct InferenceOptions {
  BackboneOptions backbone;
  int stride = 1;                     ///< visit every stride-th t (t = 1 always visited)
  bool perturb_measurements = true;   ///< use y_t^eps; false feeds the clean y_u
  bool eps_low_per_step = true;       ///< false draws eps_low once per path
  double eps_low_variance = 0.1;
  int threads = 0;                    ///< 0: DMSM_NUM_THREADS or hardware concurrency
};

/// sqrt(ab_t) y_u + M ⊙ F(C sqrt(1 - ab_t) eps_low); with one unit coil this is
/// M ⊙ F(sqrt(ab_t) x_u + sqrt(1 - ab_t) eps_low).
KSpaceData perturbed_measurements(const KSpaceData& y_u, const ComplexImage& eps_low, int t,
                                  const CoilSensitivities& coils, const NoiseSchedule& sched);

/// Diffusion steps visited by the sampler, descending from T to 1.
std::vector<int> sampling_steps(int steps, int stride);

/// One reverse step x_t -> x_{t-1}. `eps_low` overrides the per-step draw when non-null.
ComplexImage reverse_step(const ComplexImage& x_t, int t, const KSpaceData& y_u,
                          const CoilSensitivities& coils, const Model& model,
                          const NoiseSchedule& sched, Rng& rng,
                          const InferenceOptions& options = {},
                          const ComplexImage* eps_low = nullptr);

ComplexImage sample_path(const KSpaceData& y_u, const CoilSensitivities& coils, const Model& model,
                         const NoiseSchedule& sched, std::uint64_t seed,
                         const InferenceOptions& options = {});

struct MultiPathResult {
  std::vector<ComplexImage> paths;
  ComplexImage mean;
  RealImage std_map;
  std::vector<std::uint64_t> seeds;
};

/// Mean over complex paths and population std over magnitudes. Reduction runs in
/// ascending seed order with compensated sums, so it is independent of path order.
MultiPathResult aggregate_paths(std::vector<ComplexImage> paths, std::vector<std::uint64_t> seeds);

MultiPathResult multipath_reconstruct(const KSpaceData& y_u, const CoilSensitivities& coils,
                                      const Model& model, const NoiseSchedule& sched, int n_paths,
                                      std::uint64_t base_seed, const InferenceOptions& options = {});

/// Worker count from DMSM_NUM_THREADS (if set) capped by `requested` when positive.
int resolve_threads(int requested);

}  // namespace dmsm
