#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmsm/backbone.hpp"
#include "dmsm/data.hpp"
#include "dmsm/inference.hpp"
#include "dmsm/losses.hpp"
#include "dmsm/optim.hpp"
#include "dmsm/random.hpp"

namespace dmsm {

enum class TrainMode { self_supervised, supervised };

struct TrainSample {
  std::string id;
  KSpaceData y_u;
  CoilSensitivities coils;
  std::optional<ComplexImage> ground_truth;
};

/// Undersampled slices of one split; ground truth is attached when requested.
std::vector<TrainSample> load_samples(const DatasetManifest& manifest, Split split,
                                      double acceleration, bool with_ground_truth);

struct TrainConfig {
  int steps = 2000;
  int batch_size = 1;
  AdamConfig adam{};
  double grad_clip = 1.0;
  LossWeights weights{};
  ConsistencyNorm norm = ConsistencyNorm::l1;
  double rho = 0.5;
  bool resample_partition = true;
  TrainMode mode = TrainMode::self_supervised;
  std::uint64_t seed = 0;
  BackboneOptions backbone{};
  int val_every = 250;
  int val_paths = 5;
  InferenceOptions val_inference{};
  int checkpoint_every = 250;
  int max_nonfinite_streak = 50;
  std::filesystem::path output_dir = "run";
  bool resume = false;

  void validate() const;
};

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepRecord {
  std::int64_t step = 0;
  int t = 0;
  LossBreakdown loss;
  double grad_norm = 0.0;
  bool applied = false;
  std::string sample;
};

/// Loss (and optionally gradient) of one sample with (t, eps, partition) drawn
/// from `rng`. The three branches share t, eps and the parameter store.
struct SampleLoss {
  LossBreakdown loss;
  int t = 0;
};
SampleLoss sample_loss(const TrainSample& sample, const Model& model, const NoiseSchedule& sched,
                       const TrainConfig& cfg, Rng& rng, Model* grad = nullptr);

/// Per-step RNG; a step is fully determined by (seed, step, batch slot).
Rng step_rng(std::uint64_t seed, std::int64_t step, int slot = 0);

/// Forward/backward over the batch and one Adam update. A non-finite loss or
/// gradient leaves `model` and `adam` untouched and returns applied = false.
StepRecord train_step(std::span<const TrainSample* const> batch, Model& model, AdamState& adam,
                      const NoiseSchedule& sched, const TrainConfig& cfg, std::int64_t step);

/// Index into the training set for (step, slot): per-epoch shuffles seeded by (seed, epoch).
std::size_t sample_index(std::uint64_t seed, std::int64_t step, int slot, int batch_size,
                         std::size_t n_samples);

struct ValidationRecord {
  std::int64_t step = 0;
  double psnr_db = 0.0;
  double zero_fill_psnr_db = 0.0;
};

/// Mean PSNR of `paths`-path reconstructions over samples with ground truth.
ValidationRecord validate_model(std::span<const TrainSample> val, const Model& model,
                                const NoiseSchedule& sched, int paths, std::uint64_t seed,
                                const InferenceOptions& options);

struct TrainResult {
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  std::filesystem::path log_path;
  std::int64_t final_step = 0;
  double best_val_psnr = 0.0;
  std::vector<ValidationRecord> validation;
  Model model;
};

struct TrainCallbacks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const ValidationRecord&)> on_validation;
};

/// Output files: last.ckpt, best.ckpt, train_log.jsonl, val_log.jsonl in cfg.output_dir.
TrainResult train(std::span<const TrainSample> train_set, std::span<const TrainSample> val_set,
                  const nn::LhanConfig& arch, const NoiseSchedule& sched, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks = {});

/// One JSON object per line, doubles printed round-trip exact.
std::string step_record_json(const StepRecord& r);

}  // namespace dmsm
