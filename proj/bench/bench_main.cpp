// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include "outrigger/dgp.hpp"
#include "outrigger/lp.hpp"
#include "outrigger/sim.hpp"

using namespace outrigger;

namespace {

const Dataset& training() {
  static const Dataset d = sample(DgpSpec(DgpName::ScaleMix), 20000, 1);
  return d;
}

Matrix grid(Index m) {
  Matrix p(m, 1);
  for (Index i = 0; i < m; ++i) p(i, 0) = -1.9 + 3.8 * static_cast<double>(i) / static_cast<double>(m - 1);
  return p;
}

void BM_PredictLp(benchmark::State& state) {
  const Matrix pts = grid(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(predict_lp_many(training(), pts, 0.1, 1, KernelSpec{}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_PredictLpSerial(benchmark::State& state) {
  const Matrix pts = grid(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(predict_lp_many_serial(training(), pts, 0.1, 1, KernelSpec{}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

ExperimentConfig sim_config(int reps) {
  ExperimentConfig c;
  c.dgp = DgpSpec(DgpName::ScaleMix);
  c.n = 2000;
  c.reps = reps;
  c.h_grid = {0.15};
  c.lambda_grid = {8.0};
  c.localization = 0.5;
  return c;
}

void BM_Experiment(benchmark::State& state) {
  const ExperimentConfig c = sim_config(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(run_experiment(c));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ExperimentSerial(benchmark::State& state) {
  const ExperimentConfig c = sim_config(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(run_experiment_serial(c));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_PredictLp)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_PredictLpSerial)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Experiment)->Arg(16)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ExperimentSerial)->Arg(16)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
