#include <benchmark/benchmark.h>

#include <vector>

#include "optoent/analytic.hpp"
#include "optoent/core.hpp"
#include "optoent/counting.hpp"
#include "optoent/heterodyne.hpp"
#include "optoent/trajectory.hpp"

namespace {

using namespace optoent;

void BM_Derive(benchmark::State& state) {
  const SystemParams p = paper_preset();
  for (auto _ : state) benchmark::DoNotOptimize(derive(p));
}
BENCHMARK(BM_Derive);

void BM_WitnessMap(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(analytic::witness_map(201, 151));
}
BENCHMARK(BM_WitnessMap)->Unit(benchmark::kMillisecond);

// Cost per unit of simulated time grows with the Fock cutoff.
void BM_TrajectoryTwoCavity(benchmark::State& state) {
  const auto n_max = static_cast<int>(state.range(0));
  const SystemParams sp = desk_preset(0.1);
  const TwoCavityParams pair{sp, sp, 0.0, 0.0};
  const DerivedParams d = derive_pair(pair);
  const auto channels = trajectory::build_channels(pair, d, n_max);
  const JointState init = JointState::vacuum(channels.space);
  trajectory::EvolveOptions opts;
  opts.check_truncation = false;  // timing only; small cutoffs are not accurate here
  std::uint64_t seed = 1;
  for (auto _ : state) benchmark::DoNotOptimize(trajectory::evolve(channels, init, 100.0, seed++, opts));
}
BENCHMARK(BM_TrajectoryTwoCavity)->Arg(3)->Arg(5)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_EstimateG2(benchmark::State& state) {
  const SystemParams sp = desk_preset(0.1);
  const TwoCavityParams pair{sp, sp, 0.0, 0.0};
  const DerivedParams d = derive_pair(pair);
  const auto channels = trajectory::build_channels(pair, d, 5);
  const auto rec = trajectory::evolve(channels, JointState::vacuum(channels.space), 5000.0, 7).record;
  const DetectorTag from{Detector::A, Color::red};
  const DetectorTag to{Detector::A, Color::blue};
  for (auto _ : state) benchmark::DoNotOptimize(counting::estimate_g2(rec, from, to, 3.0, 0.2, 1));
  state.counters["clicks"] = static_cast<double>(rec.events.size());
}
BENCHMARK(BM_EstimateG2)->Unit(benchmark::kMicrosecond);

void BM_FilterSidebands(benchmark::State& state) {
  const DerivedParams d = derive(desk_preset(0.1));
  const auto rec = heterodyne::synthesize_surrogate(d, 200.0, 1e-3, 11);
  for (auto _ : state) benchmark::DoNotOptimize(heterodyne::filter_sidebands(rec, 8.0));
  state.counters["samples"] = static_cast<double>(rec.samples.size());
}
BENCHMARK(BM_FilterSidebands)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
