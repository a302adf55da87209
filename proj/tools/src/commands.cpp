#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "dmsm/checkpoint.hpp"
#include "dmsm/data.hpp"
#include "dmsm/inference.hpp"
#include "dmsm/random.hpp"
#include "dmsm/train.hpp"
#include "image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dmsm::cli {

namespace {

constexpr std::uint64_t kReconStream = 0x5245434f4eULL;

bool non_empty_dir(const fs::path& p) { return fs::exists(p) && !fs::is_empty(p); }

void write_json(const fs::path& path, const json& j) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + path.string());
  }
  fs::rename(tmp, path);
}

json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

std::string cell(double v, int prec) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

DatasetManifest open_dataset(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json"))
    throw UsageError("no dataset at " + dir.string() + " (run `dmsm simulate` first)");
  return load_manifest(dir);
}

double max_value(const RealImage& a) {
  double m = 0.0;
  for (double v : a.data) m = std::max(m, v);
  return m;
}

}  // namespace

std::uint64_t slice_seed(std::uint64_t base, const std::string& id) {
  return derive_seed(base, kReconStream, fnv1a64(id.data(), id.size()));
}

void cmd_simulate(const RunConfig& cfg, const json& resolved, bool force, std::ostream& out) {
  if (non_empty_dir(cfg.dataset_dir) && !force)
    throw UsageError(cfg.dataset_dir.string() + " is not empty; pass --force to overwrite");
  const auto m = build_dataset(cfg.dataset, cfg.dataset_dir, force);
  write_json(cfg.dataset_dir / "config.json", resolved);
  out << "dataset " << cfg.dataset_dir.string() << ": " << m.ids(Split::train).size() << " train, "
      << m.ids(Split::val).size() << " val, " << m.ids(Split::test).size() << " test slices of " << m.height
      << "x" << m.width << ", " << m.n_coils << " coils, masks";
  for (const auto& mk : m.masks) out << ' ' << mask_key(mk.acceleration);
  out << '\n';
}

void cmd_train(const RunConfig& cfg, const json& resolved, bool resume, bool force, std::ostream& out) {
  const fs::path dir = cfg.train_dir();
  if (resume && force) throw UsageError("--resume and --force are mutually exclusive");
  if (resume && !fs::exists(dir / "last.ckpt")) throw UsageError("nothing to resume in " + dir.string());
  if (!resume && non_empty_dir(dir)) {
    if (!force) throw UsageError(dir.string() + " is not empty; pass --resume to continue or --force to restart");
    fs::remove_all(dir);
  }
  const auto manifest = open_dataset(cfg.dataset_dir);
  const bool supervised = cfg.train.mode == TrainMode::supervised;
  const auto train_set = load_samples(manifest, Split::train, cfg.train_acceleration, supervised);
  const auto val_set = cfg.train.val_every > 0
                           ? load_samples(manifest, Split::val, cfg.train_acceleration, true)
                           : std::vector<TrainSample>{};

  TrainConfig tc = cfg.train;
  tc.output_dir = dir;
  tc.resume = resume;
  fs::create_directories(dir);
  write_json(dir / "config.json", resolved);

  out << "training " << (supervised ? "supervised" : "self-supervised") << " on " << train_set.size()
      << " slices for " << tc.steps << " steps -> " << dir.string() << '\n';
  TrainCallbacks cb;
  cb.on_step = [&](const StepRecord& r) {
    if (r.step % cfg.log_every != 0 && r.step != tc.steps && r.applied) return;
    char line[256];
    std::snprintf(line, sizeof line, "step %6lld  t %3d  total %.5f  dm %.5f  ic %.5f  kc %.5f  |g| %.3g%s\n",
                  static_cast<long long>(r.step), r.t, r.loss.total, r.loss.dm, r.loss.ic, r.loss.kc, r.grad_norm,
                  r.applied ? "" : "  (skipped: non-finite)");
    out << line << std::flush;
  };
  cb.on_validation = [&](const ValidationRecord& v) {
    char line[160];
    std::snprintf(line, sizeof line, "validation step %lld: PSNR %.3f dB (zero-fill %.3f dB)\n",
                  static_cast<long long>(v.step), v.psnr_db, v.zero_fill_psnr_db);
    out << line << std::flush;
  };
  const auto res = train(train_set, val_set, cfg.model, cfg.schedule(), tc, cb);
  out << "finished at step " << res.final_step << "; checkpoint " << res.last_checkpoint.string() << '\n';
}

void cmd_reconstruct(const RunConfig& cfg, const json& resolved, const ReconstructRequest& req,
                     std::ostream& out) {
  fs::path ckpt_path = req.checkpoint;
  if (ckpt_path.empty()) {
    ckpt_path = cfg.train_dir() / "best.ckpt";
    if (!fs::exists(ckpt_path)) ckpt_path = cfg.train_dir() / "last.ckpt";
  }
  if (!fs::exists(ckpt_path)) throw UsageError("checkpoint not found: " + ckpt_path.string());
  const Checkpoint ck = load_checkpoint(ckpt_path, cfg.model);

  const fs::path dir = cfg.recon_dir();
  if (non_empty_dir(dir)) {
    if (!req.force) throw UsageError(dir.string() + " is not empty; pass --force to overwrite");
    fs::remove_all(dir);
  }
  const auto manifest = open_dataset(cfg.dataset_dir);
  std::vector<std::string> ids = req.slices.empty() ? manifest.ids(cfg.inference.split) : req.slices;
  for (const auto& id : ids) (void)manifest.entry(id);
  if (ids.empty()) throw UsageError("no slices selected");

  const InferenceSettings& inf = cfg.inference;
  InferenceOptions opts = inf.options;
  opts.backbone = ck.backbone;
  fs::create_directories(dir);

  json slices = json::array();
  for (const auto& id : ids) {
    const SliceData s = load_slice(manifest, id);
    const KSpaceData y = undersample(full_kspace(s), load_mask(manifest, id, inf.acceleration));
    const std::uint64_t base = slice_seed(inf.seed, id);
    const auto r = multipath_reconstruct(y, s.coils, ck.model, ck.schedule, inf.paths, base, opts);

    const fs::path sd = dir / id;
    fs::create_directories(sd);
    write_complex64(sd / "mean.raw", r.mean);
    write_float32(sd / "std.raw", r.std_map);
    json paths = json::array();
    if (inf.save_paths) {
      fs::create_directories(sd / "paths");
      for (std::size_t p = 0; p < r.paths.size(); ++p) {
        const std::string name = "paths/path_" + std::to_string(r.seeds[p]) + ".raw";
        write_complex64(sd / name, r.paths[p]);
        paths.push_back(id + "/" + name);
      }
    }

    const RealImage mag = magnitude(r.mean);
    const RealImage ref = magnitude(s.image);
    const double img_hi = std::max(ref.max(), mag.max());
    write_gray_png(sd / "recon.png", mag, 0.0, img_hi, {{"Title", id + " reconstruction"}});
    const RealImage err = abs_error(r.mean, s.image);
    const double map_hi = std::max(max_value(err), max_value(r.std_map));
    write_gray_png(sd / "error.png", err, 0.0, map_hi, {{"Title", id + " absolute error"}});
    write_gray_png(sd / "uncertainty.png", r.std_map, 0.0, map_hi, {{"Title", id + " uncertainty"}});
    write_legend_png(sd / "legend.png", 0.0, map_hi, "shared scale of error.png and uncertainty.png");

    slices.push_back({{"id", id},
                      {"seeds", r.seeds},
                      {"mean", id + "/mean.raw"},
                      {"std", id + "/std.raw"},
                      {"paths", paths},
                      {"images",
                       {{"recon", id + "/recon.png"},
                        {"error", id + "/error.png"},
                        {"uncertainty", id + "/uncertainty.png"},
                        {"legend", id + "/legend.png"}}}});
    out << "reconstructed " << id << " with " << inf.paths << " path" << (inf.paths == 1 ? "" : "s") << '\n'
        << std::flush;
  }

  const json bundle{{"version", 1},
                    {"checkpoint", fs::absolute(ckpt_path).string()},
                    {"checkpoint_fnv1a64", file_digest(ckpt_path)},
                    {"checkpoint_step", ck.step},
                    {"dataset", fs::absolute(cfg.dataset_dir).string()},
                    {"acceleration", inf.acceleration},
                    {"paths", inf.paths},
                    {"base_seed", inf.seed},
                    {"seed_rule", "derive_seed(base_seed, 0x5245434f4e, fnv1a64(id)) + path index"},
                    {"config", resolved},
                    {"slices", slices}};
  write_json(dir / "manifest.json", bundle);
  out << "bundle written to " << dir.string() << '\n';
}

json report_json(const MetricReport& r) {
  auto agg = [](const Aggregate& a) { return json{{"mean", number(a.mean)}, {"std", number(a.stddev)}}; };
  json slices = json::array();
  for (const auto& s : r.slices) {
    json j{{"id", s.id}, {"psnr_db", number(s.psnr_db)}, {"ssim", s.ssim}, {"mae", s.mae}};
    if (s.pcc) j["pcc"] = *s.pcc;
    slices.push_back(j);
  }
  json j{{"label", r.label},
         {"slices", slices},
         {"aggregate", {{"psnr_db", agg(r.psnr_db)}, {"ssim", agg(r.ssim)}, {"mae", agg(r.mae)}}}};
  if (r.pcc) j["aggregate"]["pcc"] = agg(*r.pcc);
  return j;
}

void write_report_csv(const fs::path& path, const std::vector<MetricReport>& reports) {
  std::ofstream out(path);
  out << "method,slice,psnr_db,ssim,mae,pcc\n";
  auto num = [](double v) { return cell(v, 10); };
  for (const auto& r : reports) {
    for (const auto& s : r.slices)
      out << r.label << ',' << s.id << ',' << num(s.psnr_db) << ',' << num(s.ssim) << ',' << num(s.mae) << ','
          << (s.pcc ? num(*s.pcc) : "") << '\n';
    out << r.label << ",mean," << num(r.psnr_db.mean) << ',' << num(r.ssim.mean) << ',' << num(r.mae.mean) << ','
        << (r.pcc ? num(r.pcc->mean) : "") << '\n';
    out << r.label << ",std," << num(r.psnr_db.stddev) << ',' << num(r.ssim.stddev) << ',' << num(r.mae.stddev)
        << ',' << (r.pcc ? num(r.pcc->stddev) : "") << '\n';
  }
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::vector<MetricReport> cmd_evaluate(const RunConfig& cfg, const fs::path& recon_dir, std::ostream& out) {
  const fs::path dir = recon_dir.empty() ? cfg.recon_dir() : recon_dir;
  std::ifstream in(dir / "manifest.json");
  if (!in) throw UsageError("no reconstruction bundle at " + dir.string() + " (run `dmsm reconstruct` first)");
  const json bundle = json::parse(in);
  const fs::path data_dir = bundle.value("dataset", cfg.dataset_dir.string());
  const DatasetManifest manifest = open_dataset(data_dir);
  const double acc = bundle.at("acceleration");
  const int paths = bundle.at("paths");

  MetricReport model{"dmsm", {}, {}, {}, {}, {}};
  MetricReport zf{"zero_fill", {}, {}, {}, {}, {}};
  for (const auto& s : bundle.at("slices")) {
    const std::string id = s.at("id");
    const ComplexImage mean = read_complex64(dir / s.at("mean").get<std::string>());
    const RealImage sd = read_float32(dir / s.at("std").get<std::string>());
    SliceData gt;
    try {
      gt = load_slice(manifest, id);
    } catch (const std::exception& e) {
      out << "warning: no ground truth for " << id << " (" << e.what() << "); slice skipped\n";
      continue;
    }
    model.slices.push_back(evaluate_slice(id, mean, gt.image, paths > 1 ? &sd : nullptr));
    const KSpaceData y = undersample(full_kspace(gt), load_mask(manifest, id, acc));
    zf.slices.push_back(evaluate_slice(id, zero_fill_recon(y, gt.coils), gt.image));
  }
  if (model.slices.empty()) throw std::runtime_error("no slice had ground truth; nothing to evaluate");
  if (paths < 2) out << "warning: single-path bundle, PCC between uncertainty and error not computed\n";
  model.finalize();
  zf.finalize();
  std::vector<MetricReport> reports{model, zf};

  fs::create_directories(cfg.eval_dir());
  json j{{"bundle", fs::absolute(dir).string()},
         {"checkpoint_fnv1a64", bundle.value("checkpoint_fnv1a64", "")},
         {"reports", json::array()}};
  for (const auto& r : reports) j["reports"].push_back(report_json(r));
  write_json(cfg.eval_dir() / "metrics.json", j);
  write_report_csv(cfg.eval_dir() / "metrics.csv", reports);

  out << std::left << std::setw(10) << "method" << std::right << std::setw(18) << "PSNR (dB)" << std::setw(18)
      << "SSIM" << std::setw(18) << "MAE" << std::setw(18) << "PCC" << '\n';
  for (const auto& r : reports) {
    auto pm = [](const Aggregate& a, int p) { return cell(a.mean, p) + " +- " + cell(a.stddev, p); };
    out << std::left << std::setw(10) << r.label << std::right << std::setw(18) << pm(r.psnr_db, 2) << std::setw(18)
        << pm(r.ssim, 4) << std::setw(18) << pm(r.mae, 4) << std::setw(18) << (r.pcc ? pm(*r.pcc, 3) : "-") << '\n';
  }
  out << "written " << (cfg.eval_dir() / "metrics.json").string() << " and metrics.csv\n";
  return reports;
}

}  // namespace dmsm::cli
