#include <benchmark/benchmark.h>

#include "cacc/model.hpp"
#include "cacc/reach.hpp"
#include "cacc/sim.hpp"
#include "cacc/synth.hpp"

using namespace cacc;

namespace {

const SynthesisResult& design() {
  static const SynthesisResult d = [] {
    const PlatoonConfig c;
    const ExtendedModel em = build_extended(c);
    SynthesisResult r;
    r.est = synth_estimator(em, {0.67});
    r.mon = synth_monitor(em, r.est, c.wbar2, c.wbar3);
    return r;
  }();
  return d;
}

void BM_Discretize(benchmark::State& st) {
  const PlatoonConfig c;
  for (auto _ : st) {
    benchmark::DoNotOptimize(discretize(build_continuous(c), c.Ts));
    benchmark::DoNotOptimize(build_extended(c));
  }
}
BENCHMARK(BM_Discretize);

void BM_EstimatorSolve(benchmark::State& st) {
  const ExtendedModel em = build_extended(PlatoonConfig{});
  for (auto _ : st) benchmark::DoNotOptimize(synth_estimator(em, {0.67}));
}
BENCHMARK(BM_EstimatorSolve)->Unit(benchmark::kMillisecond);

void BM_SimulateRuns(benchmark::State& st) {
  Scenario s = highway_scenario(PlatoonConfig{});
  s.horizon = 300;
  s.runs = static_cast<int>(st.range(0));
  s.record_runs = 0;
  const SynthesisResult& d = design();
  for (auto _ : st) benchmark::DoNotOptimize(run_scenario(s, d));
  st.SetItemsProcessed(st.iterations() * s.runs * s.horizon);
}
BENCHMARK(BM_SimulateRuns)->Arg(1)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
