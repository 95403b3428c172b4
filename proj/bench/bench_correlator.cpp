#include <benchmark/benchmark.h>

#include <random>

#include "pairhalo/correlator.hpp"

using namespace pairhalo;

namespace {

correlator::ShotVelocities halo_shots(int shots, int atoms) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> n(0.0, 1.0);
  correlator::ShotVelocities out(shots);
  for (auto& s : out)
    for (int i = 0; i < atoms; ++i) s.push_back(normalized(Vec3{n(rng), n(rng), n(rng)}) * (1.0 + 0.05 * n(rng)));
  return out;
}

template <auto Fn>
void run(benchmark::State& state, correlator::Variable v) {
  const auto shots = halo_shots(static_cast<int>(state.range(0)), 100);
  correlator::CorrelationConfig cfg;
  cfg.variable = v;
  for (auto _ : state) benchmark::DoNotOptimize(Fn(shots, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 100);
}

void SameParallel(benchmark::State& s) { run<correlator::same_shot_histogram>(s, correlator::Variable::sum); }
void SameSerial(benchmark::State& s) { run<correlator::reference::same_shot_histogram>(s, correlator::Variable::sum); }
void CrossParallel(benchmark::State& s) { run<correlator::cross_shot_histogram>(s, correlator::Variable::sum); }
void CrossSerial(benchmark::State& s) { run<correlator::reference::cross_shot_histogram>(s, correlator::Variable::sum); }
void CrossDiffParallel(benchmark::State& s) { run<correlator::cross_shot_histogram>(s, correlator::Variable::diff); }
void CrossDiffSerial(benchmark::State& s) {
  run<correlator::reference::cross_shot_histogram>(s, correlator::Variable::diff);
}

}  // namespace

BENCHMARK(SameParallel)->Arg(100)->Arg(1100)->Unit(benchmark::kMillisecond);
BENCHMARK(SameSerial)->Arg(100)->Arg(1100)->Unit(benchmark::kMillisecond);
BENCHMARK(CrossParallel)->Arg(30)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(CrossSerial)->Arg(30)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(CrossDiffParallel)->Arg(30)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(CrossDiffSerial)->Arg(30)->Arg(100)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
