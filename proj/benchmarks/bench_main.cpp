#include <benchmark/benchmark.h>

#include "dmsm/data.hpp"
#include "dmsm/inference.hpp"
#include "dmsm/train.hpp"

using namespace dmsm;

namespace {

ComplexImage noise(int coils, int n, std::uint64_t seed) {
  Rng rng(seed);
  return gaussian_image(coils, n, n, rng);
}

void BM_fft2c(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const auto x = noise(5, n, 1);
  for (auto _ : st) benchmark::DoNotOptimize(fft2c(x));
  st.SetItemsProcessed(st.iterations() * 5);
}
BENCHMARK(BM_fft2c)->Arg(64)->Arg(128)->Arg(256);

void BM_conv3x3(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  nn::LhanConfig cfg;
  auto p = nn::LhanParams<float>::zeros(cfg);
  nn::randomize(p, 2, 0.1f);
  nn::FeatureMap<float> x(cfg.channels, n, n);
  x.data.setRandom();
  for (auto _ : st) benchmark::DoNotOptimize(nn::conv_forward(p.pabs[0].first, x, static_cast<nn::ConvCache<float>*>(nullptr)));
}
BENCHMARK(BM_conv3x3)->Arg(32)->Arg(64);

void BM_lhan_forward(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  Model m = Model::zeros(nn::LhanConfig{});
  nn::initialize(m, 1);
  nn::randomize(m, 2, 0.1f);
  nn::FeatureMap<float> x(4, n, n);
  x.data.setRandom();
  for (auto _ : st) benchmark::DoNotOptimize(nn::lhan_forward(m, x, 10, 50));
}
BENCHMARK(BM_lhan_forward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

struct Slice {
  ComplexImage gt = make_phantom(64, 64, 3);
  CoilSensitivities C = make_coil_maps(64, 64, 5);
  KSpaceData y = undersample(fft2c(apply_coils(gt, C)), generate_vd_mask(64, 64, 4.0, 8, 4));
};

void BM_train_step(benchmark::State& st) {
  Slice s;
  const TrainSample sample{"s", s.y, s.C, s.gt};
  Model m = Model::zeros(nn::LhanConfig{});
  nn::initialize(m, 1);
  AdamState adam = AdamState::zeros(m.config);
  const auto sched = NoiseSchedule::linear(50, 1e-4, 0.02);
  TrainConfig cfg;
  const TrainSample* batch[] = {&sample};
  std::int64_t step = 0;
  for (auto _ : st) benchmark::DoNotOptimize(train_step(batch, m, adam, sched, cfg, ++step));
}
BENCHMARK(BM_train_step)->Unit(benchmark::kMillisecond);

void BM_reverse_step(benchmark::State& st) {
  Slice s;
  Model m = Model::zeros(nn::LhanConfig{});
  nn::initialize(m, 1);
  const auto sched = NoiseSchedule::linear(50, 1e-4, 0.02);
  const auto x = noise(1, 64, 5);
  Rng rng(6);
  for (auto _ : st) benchmark::DoNotOptimize(reverse_step(x, 25, s.y, s.C, m, sched, rng));
}
BENCHMARK(BM_reverse_step)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
