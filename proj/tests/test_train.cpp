#include "doctest.h"
#include "helpers.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dmsm/checkpoint.hpp"
#include "dmsm/data.hpp"
#include "dmsm/train.hpp"

using namespace dmsm;
namespace fs = std::filesystem;

namespace {

nn::LhanConfig tiny_arch() {
  nn::LhanConfig a;
  a.channels = 8;
  a.mlp_layers = 2;
  a.time_dim = 8;
  a.attn_dim = 8;
  return a;
}

std::vector<TrainSample> tiny_set(int n, std::uint64_t seed) {
  const auto C = make_coil_maps(16, 16, 2);
  std::vector<TrainSample> v;
  for (int i = 0; i < n; ++i) {
    const auto gt = make_phantom(16, 16, seed + i);
    const auto m = generate_vd_mask(16, 16, 3.0, 4, seed + 100 + i);
    v.push_back({"s" + std::to_string(i), undersample(fft2c(apply_coils(gt, C)), m), C, gt});
  }
  return v;
}

TrainConfig tiny_cfg(const fs::path& dir, int steps) {
  TrainConfig c;
  c.steps = steps;
  c.adam.lr = 1e-3;
  c.seed = 7;
  c.val_every = 0;
  c.checkpoint_every = 3;
  c.output_dir = dir;
  return c;
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("dmsm_train_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_params(const Model& a, const Model& b) {
  auto x = parameter_spans(a), y = parameter_spans(b);
  for (std::size_t k = 0; k < x.size(); ++k)
    if (std::memcmp(x[k].data(), y[k].data(), x[k].size_bytes()) != 0) return false;
  return x.size() == y.size();
}

const NoiseSchedule kSched = NoiseSchedule::linear(10, 1e-3, 0.1);

}  // namespace

TEST_CASE("each epoch visits every sample once") {
  for (int b : {1, 2}) {
    std::multiset<std::size_t> seen;
    for (std::int64_t step = 1; step <= 5 * 2 / b; ++step)
      for (int slot = 0; slot < b; ++slot) seen.insert(sample_index(3, step, slot, b, 5));
    for (std::size_t i = 0; i < 5; ++i) CHECK(seen.count(i) == 2);
  }
  CHECK_THROWS_AS(sample_index(1, 1, 0, 1, 0), std::invalid_argument);
}

TEST_CASE("ten steps on one sample log ten records and reload exactly") {
  const auto dir = temp_dir("ten");
  const auto data = tiny_set(1, 1);
  const auto res = train(data, {}, tiny_arch(), kSched, tiny_cfg(dir, 10));
  CHECK(res.final_step == 10);
  std::ifstream log(res.log_path);
  std::string line;
  int n = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("step") == n + 1);
    for (const char* k : {"dm", "ic", "kc", "total"}) CHECK(j.contains(k));
    ++n;
  }
  CHECK(n == 10);
  REQUIRE(fs::exists(res.last_checkpoint));
  const auto ck = load_checkpoint(res.last_checkpoint, tiny_arch());
  CHECK(same_params(ck.model, res.model));
  CHECK(ck.step == 10);
}

TEST_CASE("fixed-seed training is bitwise reproducible") {
  const auto a = temp_dir("det_a"), b = temp_dir("det_b");
  const auto data = tiny_set(3, 2);
  const auto ra = train(data, {}, tiny_arch(), kSched, tiny_cfg(a, 6));
  const auto rb = train(data, {}, tiny_arch(), kSched, tiny_cfg(b, 6));
  CHECK(slurp(ra.log_path) == slurp(rb.log_path));
  CHECK(same_params(ra.model, rb.model));
  auto other = tiny_cfg(temp_dir("det_c"), 6);
  other.seed = 8;
  CHECK(slurp(train(data, {}, tiny_arch(), kSched, other).log_path) != slurp(ra.log_path));
}

TEST_CASE("resuming reproduces the uninterrupted run") {
  const auto data = tiny_set(3, 3);
  const auto full_dir = temp_dir("resume_full"), part_dir = temp_dir("resume_part");
  const auto full = train(data, {}, tiny_arch(), kSched, tiny_cfg(full_dir, 6));

  train(data, {}, tiny_arch(), kSched, tiny_cfg(part_dir, 3));
  // simulate a crash after step 4 was logged but before its checkpoint
  std::ofstream(part_dir / "train_log.jsonl", std::ios::app) << R"({"step":4,"total":123})" << '\n';
  auto cfg = tiny_cfg(part_dir, 6);
  cfg.resume = true;
  const auto resumed = train(data, {}, tiny_arch(), kSched, cfg);
  CHECK(resumed.final_step == 6);
  CHECK(slurp(resumed.log_path) == slurp(full.log_path));
  CHECK(same_params(resumed.model, full.model));
}

TEST_CASE("logged losses replay from a checkpoint") {
  const auto dir = temp_dir("replay");
  const auto data = tiny_set(2, 4);
  auto cfg = tiny_cfg(dir, 3);
  train(data, {}, tiny_arch(), kSched, cfg);
  const auto ck = load_checkpoint(dir / "last.ckpt");
  cfg.steps = 4;
  cfg.resume = true;
  train(data, {}, tiny_arch(), kSched, cfg);

  std::ifstream log(dir / "train_log.jsonl");
  std::string line;
  nlohmann::json rec;
  while (std::getline(log, line)) rec = nlohmann::json::parse(line);
  CHECK(rec.at("step") == 4);
  Rng rng = step_rng(cfg.seed, 4);
  const auto& s = data[sample_index(cfg.seed, 4, 0, 1, data.size())];
  CHECK(rec.at("sample") == s.id);
  const auto sl = sample_loss(s, ck.model, kSched, cfg, rng);
  CHECK(sl.loss.total == rec.at("total").get<double>());
  CHECK(sl.t == rec.at("t").get<int>());
}

TEST_CASE("training gradient matches finite differences of the sampled loss") {
  const auto data = tiny_set(1, 5);
  auto cfg = tiny_cfg(temp_dir("grad"), 1);
  cfg.norm = ConsistencyNorm::l2;
  Model m = Model::zeros(tiny_arch());
  nn::initialize(m, 3);
  nn::randomize(m, 4, 0.3f);
  Model grad = Model::zeros(tiny_arch());
  Rng r0 = step_rng(1, 1);
  sample_loss(data[0], m, kSched, cfg, r0, &grad);
  for (int k = 0; k < 2; ++k) {
    const float orig = m.head.bias(k);
    const float h = 1e-2f;
    m.head.bias(k) = orig + h;
    Rng a = step_rng(1, 1);
    const double lp = sample_loss(data[0], m, kSched, cfg, a).loss.total;
    m.head.bias(k) = orig - h;
    Rng b = step_rng(1, 1);
    const double lm = sample_loss(data[0], m, kSched, cfg, b).loss.total;
    m.head.bias(k) = orig;
    CHECK((lp - lm) / (2.0 * h) == doctest::Approx(grad.head.bias(k)).epsilon(3e-2));
  }
}

TEST_CASE("supervised and self-supervised L_DM agree when the target is the zero-filled input") {
  auto data = tiny_set(1, 6);
  data[0].ground_truth = zero_fill_recon(data[0].y_u, data[0].coils);
  auto cfg = tiny_cfg(temp_dir("sup"), 1);
  Model m = Model::zeros(tiny_arch());
  nn::initialize(m, 3);
  nn::randomize(m, 9, 0.3f);
  Rng a = step_rng(1, 1), b = step_rng(1, 1);
  const auto self = sample_loss(data[0], m, kSched, cfg, a);
  cfg.mode = TrainMode::supervised;
  const auto sup = sample_loss(data[0], m, kSched, cfg, b);
  CHECK(self.loss.dm == sup.loss.dm);
  data[0].ground_truth.reset();
  Rng c = step_rng(1, 1);
  CHECK_THROWS_AS(sample_loss(data[0], m, kSched, cfg, c), std::invalid_argument);
}

TEST_CASE("a non-finite loss leaves the model untouched") {
  const auto data = tiny_set(1, 7);
  auto cfg = tiny_cfg(temp_dir("nan"), 1);
  Model m = Model::zeros(tiny_arch());
  nn::initialize(m, 3);
  m.head.bias(0) = std::numeric_limits<float>::quiet_NaN();
  const Model before = m;
  AdamState st = AdamState::zeros(tiny_arch());
  const TrainSample* batch[] = {&data[0]};
  const auto rec = train_step(batch, m, st, kSched, cfg, 1);
  CHECK_FALSE(rec.applied);
  CHECK(same_params(m, before));
  CHECK(st.step == 0);
}

TEST_CASE("persistent non-finite losses abort training") {
  auto data = tiny_set(1, 8);
  for (auto& v : data[0].y_u.data.data()) v *= 1e300;
  auto cfg = tiny_cfg(temp_dir("abort"), 20);
  cfg.max_nonfinite_streak = 5;
  CHECK_THROWS_AS(train(data, {}, tiny_arch(), kSched, cfg), TrainingAborted);
}

TEST_CASE("train argument checks") {
  auto cfg = tiny_cfg(temp_dir("args"), 1);
  CHECK_THROWS_AS(train({}, {}, tiny_arch(), kSched, cfg), std::invalid_argument);
  cfg.rho = 1.0;
  CHECK_THROWS_AS(train(tiny_set(1, 1), {}, tiny_arch(), kSched, cfg), std::invalid_argument);
}

TEST_CASE("validation runs and writes the best checkpoint") {
  const auto dir = temp_dir("val");
  const auto data = tiny_set(2, 9);
  const auto val = tiny_set(1, 50);
  auto cfg = tiny_cfg(dir, 4);
  cfg.val_every = 2;
  cfg.val_paths = 2;
  const auto res = train(data, val, tiny_arch(), kSched, cfg);
  CHECK(res.validation.size() == 2);
  CHECK(std::isfinite(res.validation[0].psnr_db));
  CHECK(fs::exists(res.best_checkpoint));
  CHECK(res.best_val_psnr == std::max(res.validation[0].psnr_db, res.validation[1].psnr_db));
}
