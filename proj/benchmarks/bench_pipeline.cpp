#include <benchmark/benchmark.h>

#include "mftp/estimators.hpp"
#include "mftp/fpca.hpp"
#include "mftp/simgen.hpp"

using namespace mftp;

namespace {

Dataset scenario_data(std::size_t n) {
  auto cfg = sim::scenario_config(2);
  cfg.n = n;
  return sim::generate_dataset(cfg, 1);
}

void BM_FitFpca(benchmark::State& state) {
  const Dataset d = scenario_data(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fit_fpca(d));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_FitFpca)->RangeMultiplier(2)->Range(200, 3200)->Unit(benchmark::kMillisecond)->Complexity();

void BM_Aipw(benchmark::State& state) {
  const Dataset d = scenario_data(static_cast<std::size_t>(state.range(0)));
  const PipelineSpec spec;
  const auto prep = prepare(d, sim::scenario_config(2).policy, spec);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_aipw(prep, spec).point);
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Aipw)->RangeMultiplier(2)->Range(200, 3200)->Unit(benchmark::kMillisecond)->Complexity();

void BM_Bootstrap(benchmark::State& state) {
  const Dataset d = scenario_data(static_cast<std::size_t>(state.range(0)));
  PipelineSpec spec;
  spec.bootstrap_B = 100;
  const auto prep = prepare(d, sim::scenario_config(2).policy, spec);
  const EstimatorKind kinds[] = {EstimatorKind::AIPW};
  for (auto _ : state) benchmark::DoNotOptimize(bootstrap(prep, spec, kinds).intervals);
}
BENCHMARK(BM_Bootstrap)->Arg(400)->Arg(800)->Unit(benchmark::kMillisecond);

void BM_Oracle(benchmark::State& state) {
  auto cfg = sim::scenario_config(4);
  cfg.oracle_draws = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sim::oracle_truth(cfg, 7).mean);
}
BENCHMARK(BM_Oracle)->Arg(100000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
