#include "dmsm/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "dmsm/checkpoint.hpp"
#include "dmsm/metrics.hpp"

namespace dmsm {

namespace {

using nlohmann::json;

enum Stream : std::uint64_t { kInitStream = 1, kStepStream, kShuffleStream, kPartitionStream, kValStream };

double mean_penalty(const ComplexImage& x, const ComplexImage& ref, ConsistencyNorm norm,
                    ComplexImage* grad) {
  const double n = static_cast<double>(x.size());
  double acc = 0.0;
  if (grad) *grad = ComplexImage(x.coils(), x.height(), x.width());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const cplx r = x[i] - ref[i];
    if (norm == ConsistencyNorm::l2) {
      acc += std::norm(r);
      if (grad) (*grad)[i] = 2.0 * r / n;
    } else {
      const double a = std::abs(r);
      acc += a;
      if (grad && a > 0.0) (*grad)[i] = r / (a * n);
    }
  }
  return acc / n;
}

void truncate_log(const std::filesystem::path& path, std::int64_t last_step) {
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path);
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      if (json::parse(line).at("step").get<std::int64_t>() <= last_step) keep.push_back(line);
    } catch (const std::exception&) {
      break;
    }
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

std::string config_extra(const TrainConfig& cfg) {
  return json{{"seed", cfg.seed},
              {"lr", cfg.adam.lr},
              {"rho", cfg.rho},
              {"mode", cfg.mode == TrainMode::supervised ? "supervised" : "self_supervised"},
              {"lambda_ic", cfg.weights.lambda_ic},
              {"lambda_kc", cfg.weights.lambda_kc},
              {"dm_multiplier", cfg.weights.dm_multiplier}}
      .dump();
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("train: steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(adam.lr > 0.0)) throw std::invalid_argument("train: lr must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw std::invalid_argument("train: Adam betas must lie in [0, 1)");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("train: rho must lie in (0, 1)");
  if (weights.lambda_ic < 0 || weights.lambda_kc < 0 || weights.dm_multiplier < 0)
    throw std::invalid_argument("train: loss weights must be non-negative");
  if (val_paths < 1) throw std::invalid_argument("train: val_paths must be >= 1");
  if (max_nonfinite_streak < 1) throw std::invalid_argument("train: max_nonfinite_streak must be >= 1");
}

std::vector<TrainSample> load_samples(const DatasetManifest& manifest, Split split,
                                      double acceleration, bool with_ground_truth) {
  std::vector<TrainSample> out;
  for (const auto& id : manifest.ids(split)) {
    SliceData s = load_slice(manifest, id);
    TrainSample t{id, undersample(full_kspace(s), load_mask(manifest, id, acceleration)),
                  std::move(s.coils), std::nullopt};
    if (with_ground_truth) t.ground_truth = std::move(s.image);
    out.push_back(std::move(t));
  }
  return out;
}

Rng step_rng(std::uint64_t seed, std::int64_t step, int slot) {
  return Rng(derive_seed(seed, kStepStream + (static_cast<std::uint64_t>(slot) << 8),
                         static_cast<std::uint64_t>(step)));
}

std::size_t sample_index(std::uint64_t seed, std::int64_t step, int slot, int batch_size,
                         std::size_t n) {
  if (n == 0) throw std::invalid_argument("sample_index: empty dataset");
  const auto pos = static_cast<std::uint64_t>(step - 1) * static_cast<std::uint64_t>(batch_size) +
                   static_cast<std::uint64_t>(slot);
  const std::uint64_t epoch = pos / n;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(seed, kShuffleStream, epoch));
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }
  return perm[pos % n];
}

SampleLoss sample_loss(const TrainSample& s, const Model& model, const NoiseSchedule& sched,
                       const TrainConfig& cfg, Rng& rng, Model* grad) {
  const auto& y_u = s.y_u;
  const auto& coils = s.coils;
  const int h = y_u.data.height();
  const int w = y_u.data.width();

  SampleLoss out;
  out.t = std::uniform_int_distribution<int>(1, sched.steps())(rng);
  const int t = out.t;
  const ComplexImage eps = gaussian_image(1, h, w, rng);
  const std::uint64_t part_seed =
      cfg.resample_partition ? rng() : derive_seed(cfg.seed, kPartitionStream, fnv1a64(s.id.data(), s.id.size()));
  const KSpacePartition part = partition_kspace(y_u, cfg.rho, part_seed);
  const std::array<const KSpaceData*, 3> ys{&y_u, &part.p1, &part.p2};

  std::array<ModelCache, 3> caches;
  std::vector<ComplexImage> eps_hat, k_hat;
  std::array<ComplexImage, 3> recon;
  for (std::size_t b = 0; b < 3; ++b) {
    const ComplexImage x_u = zero_fill_recon(*ys[b], coils);
    const ComplexImage x_t = forward_noise(x_u, t, eps, sched);
    auto o = backbone_reconstruct(x_t, *ys[b], coils, t, model, sched, cfg.backbone,
                                  grad ? &caches[b] : nullptr);
    k_hat.push_back(fft2c(apply_coils(o.recon, coils)));
    eps_hat.push_back(std::move(o.eps_hat));
    recon[b] = std::move(o.recon);
  }

  const bool want = grad != nullptr;
  std::vector<ComplexImage> g_dm, g_kc;
  std::array<ComplexImage, 3> g_ic;
  const double dm = loss_dm(eps, eps_hat, want ? &g_dm : nullptr);
  double ic = 0.0, kc = 0.0;
  if (cfg.mode == TrainMode::self_supervised) {
    ic = loss_ic(recon[0], recon[1], recon[2], cfg.norm, want ? &g_ic : nullptr);
    kc = loss_kc(k_hat, y_u, cfg.norm, want ? &g_kc : nullptr);
  } else {
    if (!s.ground_truth) throw std::invalid_argument("supervised training needs ground truth for " + s.id);
    for (std::size_t b = 0; b < 3; ++b) ic += mean_penalty(recon[b], *s.ground_truth, cfg.norm, want ? &g_ic[b] : nullptr);
    const KSpaceData y_full{fft2c(apply_coils(*s.ground_truth, coils)), SamplingMask::full(h, w)};
    kc = loss_kc(k_hat, y_full, cfg.norm, want ? &g_kc : nullptr);
  }
  out.loss = total_loss(dm, ic, kc, cfg.weights);
  if (!want || !std::isfinite(out.loss.total)) return out;

  const auto& wts = cfg.weights;
  for (std::size_t b = 0; b < 3; ++b) {
    ComplexImage g_recon = wts.lambda_ic * g_ic[b];
    if (wts.lambda_kc != 0.0) g_recon += wts.lambda_kc * combine_coils(ifft2c(g_kc[b]), coils);
    const ComplexImage g_eps = wts.dm_multiplier * g_dm[b];
    backbone_backward(*ys[b], coils, t, model, sched, cfg.backbone, caches[b], g_eps, g_recon, *grad);
  }
  return out;
}

StepRecord train_step(std::span<const TrainSample* const> batch, Model& model, AdamState& adam,
                      const NoiseSchedule& sched, const TrainConfig& cfg, std::int64_t step) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  StepRecord rec;
  rec.step = step;
  Model grad = Model::zeros(model.config);
  const double nb = static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Rng rng = step_rng(cfg.seed, step, static_cast<int>(i));
    SampleLoss sl;
    try {
      sl = sample_loss(*batch[i], model, sched, cfg, rng, &grad);
    } catch (const NonFiniteError&) {
      sl.loss.dm = sl.loss.ic = sl.loss.kc = std::numeric_limits<double>::quiet_NaN();
    }
    if (i == 0) {
      rec.t = sl.t;
      rec.sample = batch[i]->id;
    }
    rec.loss.dm += sl.loss.dm / nb;
    rec.loss.ic += sl.loss.ic / nb;
    rec.loss.kc += sl.loss.kc / nb;
  }
  rec.loss = total_loss(rec.loss.dm, rec.loss.ic, rec.loss.kc, cfg.weights);
  if (!std::isfinite(rec.loss.total)) return rec;
  if (batch.size() > 1) scale_parameters(grad, 1.0 / nb);
  const double norm = global_norm(grad);
  rec.grad_norm = norm;
  if (!std::isfinite(norm)) return rec;
  adam_step(model, grad, adam, cfg.adam, cfg.grad_clip);
  rec.applied = true;
  return rec;
}

ValidationRecord validate_model(std::span<const TrainSample> val, const Model& model,
                                const NoiseSchedule& sched, int paths, std::uint64_t seed,
                                const InferenceOptions& options) {
  ValidationRecord r;
  std::vector<double> p, z;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const auto& s = val[i];
    if (!s.ground_truth) continue;
    const auto res = multipath_reconstruct(s.y_u, s.coils, model, sched, paths,
                                           derive_seed(seed, kValStream, i), options);
    p.push_back(evaluate_slice(s.id, res.mean, *s.ground_truth).psnr_db);
    z.push_back(evaluate_slice(s.id, zero_fill_recon(s.y_u, s.coils), *s.ground_truth).psnr_db);
  }
  if (p.empty()) throw std::invalid_argument("validate_model: no validation slice has ground truth");
  r.psnr_db = aggregate(p).mean;
  r.zero_fill_psnr_db = aggregate(z).mean;
  return r;
}

std::string step_record_json(const StepRecord& r) {
  return json{{"step", r.step},
              {"t", r.t},
              {"sample", r.sample},
              {"dm", r.loss.dm},
              {"ic", r.loss.ic},
              {"kc", r.loss.kc},
              {"dm_term", r.loss.dm_term},
              {"ic_term", r.loss.ic_term},
              {"kc_term", r.loss.kc_term},
              {"total", r.loss.total},
              {"grad_norm", r.grad_norm},
              {"applied", r.applied}}
      .dump();
}

TrainResult train(std::span<const TrainSample> train_set, std::span<const TrainSample> val_set,
                  const nn::LhanConfig& arch, const NoiseSchedule& sched, const TrainConfig& cfg,
                  const TrainCallbacks& cb) {
  cfg.validate();
  arch.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (cfg.mode == TrainMode::supervised)
    for (const auto& s : train_set)
      if (!s.ground_truth) throw std::invalid_argument("train: supervised mode needs ground truth for " + s.id);

  std::filesystem::create_directories(cfg.output_dir);
  TrainResult res;
  res.last_checkpoint = cfg.output_dir / "last.ckpt";
  res.best_checkpoint = cfg.output_dir / "best.ckpt";
  res.log_path = cfg.output_dir / "train_log.jsonl";
  const auto val_log_path = cfg.output_dir / "val_log.jsonl";

  Checkpoint ck;
  ck.schedule = sched;
  ck.backbone = cfg.backbone;
  ck.extra_json = config_extra(cfg);
  if (cfg.resume && std::filesystem::exists(res.last_checkpoint)) {
    Checkpoint loaded = load_checkpoint(res.last_checkpoint, arch);
    if (loaded.schedule.betas() != sched.betas())
      throw CheckpointError("resume: checkpoint schedule differs from the configured one");
    ck.model = std::move(loaded.model);
    ck.adam = std::move(loaded.adam);
    ck.step = loaded.step;
    ck.best_metric = loaded.best_metric;
    truncate_log(res.log_path, ck.step);
    truncate_log(val_log_path, ck.step);
  } else {
    ck.model = Model::zeros(arch);
    nn::initialize(ck.model, derive_seed(cfg.seed, kInitStream));
    ck.adam = AdamState::zeros(arch);
    std::ofstream(res.log_path, std::ios::trunc);
    std::ofstream(val_log_path, std::ios::trunc);
  }

  std::ofstream log(res.log_path, std::ios::app);
  std::ofstream val_log(val_log_path, std::ios::app);
  int streak = 0;
  std::vector<const TrainSample*> batch(static_cast<std::size_t>(cfg.batch_size));

  auto save = [&](const std::filesystem::path& p) { save_checkpoint(p, ck); };

  for (std::int64_t step = ck.step + 1; step <= cfg.steps; ++step) {
    for (int b = 0; b < cfg.batch_size; ++b)
      batch[b] = &train_set[sample_index(cfg.seed, step, b, cfg.batch_size, train_set.size())];
    const StepRecord rec = train_step(batch, ck.model, ck.adam, sched, cfg, step);
    log << step_record_json(rec) << '\n';
    log.flush();
    if (cb.on_step) cb.on_step(rec);
    streak = rec.applied ? 0 : streak + 1;
    if (streak >= cfg.max_nonfinite_streak) {
      ck.step = step;
      throw TrainingAborted("training aborted: " + std::to_string(streak) +
                            " consecutive non-finite steps ending at step " + std::to_string(step));
    }
    ck.step = step;

    const bool last = step == cfg.steps;
    if (!val_set.empty() && cfg.val_every > 0 && (step % cfg.val_every == 0 || last)) {
      ValidationRecord v = validate_model(val_set, ck.model, sched, cfg.val_paths, cfg.seed, cfg.val_inference);
      v.step = step;
      res.validation.push_back(v);
      val_log << json{{"step", v.step}, {"psnr_db", v.psnr_db}, {"zero_fill_psnr_db", v.zero_fill_psnr_db}}.dump()
              << '\n';
      val_log.flush();
      if (cb.on_validation) cb.on_validation(v);
      if (v.psnr_db > ck.best_metric) {
        ck.best_metric = v.psnr_db;
        save(res.best_checkpoint);
      }
    }
    if (last || (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0)) save(res.last_checkpoint);
  }
  if (!std::filesystem::exists(res.last_checkpoint)) save(res.last_checkpoint);
  if (!std::filesystem::exists(res.best_checkpoint)) save(res.best_checkpoint);

  res.final_step = ck.step;
  res.best_val_psnr = ck.best_metric;
  res.model = std::move(ck.model);
  return res;
}

}  // namespace dmsm
