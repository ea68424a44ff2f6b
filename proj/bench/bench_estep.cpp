// Serial reference kernels against their OpenMP versions.
#include <benchmark/benchmark.h>

#include <map>

#include "wfr/estep.hpp"
#include "wfr/predict.hpp"
#include "wfr/simstudy.hpp"

using namespace wfr;

namespace {

struct Setup {
  ModelConfig config;
  ModelParams params;
  CurveDataset data;
};

const Setup& setup(int n) {
  static std::map<int, Setup> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  const SimTruth truth = sim_truth(1);
  const ModelConfig c = estimator_config(warped_estimator(1));
  SimData sim = generate(truth, n, 17);
  FitConfig fc;
  fc.max_iter = 20;
  const FitResult f = fit(c, sim.data, fc);
  return cache.emplace(n, Setup{c, f.params, std::move(sim.data)}).first->second;
}

void BM_EStepSerial(benchmark::State& state) {
  const Setup& s = setup(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(e_step_serial(s.config, s.params, s.data, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_EStepParallel(benchmark::State& state) {
  const Setup& s = setup(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(e_step_parallel(s.config, s.params, s.data, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Predict(benchmark::State& state) {
  const Setup& s = setup(static_cast<int>(state.range(0)));
  const std::vector<Eigen::VectorXd> grids(s.data.size(), Eigen::VectorXd::LinSpaced(50, 0.0, 1.0));
  const int threads = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(predict_all(s.config, s.params, s.data, grids, {}, threads));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_EStepSerial)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EStepParallel)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);
// second argument: 1 = serial, 0 = OpenMP default
BENCHMARK(BM_Predict)->Args({200, 1})->Args({200, 0})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
