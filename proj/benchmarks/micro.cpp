#include <random>

#include <benchmark/benchmark.h>

#include "rkhs_rl/agent.hpp"
#include "rkhs_rl/qfunc.hpp"
#include "rkhs_rl/verify/oracles.hpp"

using namespace rkhs_rl;

static void BM_Featurize(benchmark::State& state) {
  const RffMap m = sample_rff(1, static_cast<int>(state.range(0)), 2.5);
  const Point z{State(0.1, -0.2, 0.3, 0.4), 1.5};
  for (auto _ : state) benchmark::DoNotOptimize(featurize(m, z));
}
BENCHMARK(BM_Featurize)->Arg(200)->Arg(500)->Arg(10000);

static void BM_BuildPsi(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const RffMap m = sample_rff(2, 200, 2.5);
  const TrajectorySet t = verify::random_trajectories(rng, static_cast<int>(state.range(0)),
                                                      std::vector<double>{1.0, 1.5, 2.0});
  for (auto _ : state) benchmark::DoNotOptimize(build_psi(t, m, 0.1));
}
BENCHMARK(BM_BuildPsi)->Arg(5)->Arg(20)->Arg(80);

static void BM_Episode(benchmark::State& state) {
  env::StreamSpec spec;
  spec.n_iters = state.range(0);
  spec.noise = {{0, env::AlphaStable{}}};
  const env::DataStream ds = env::generate_stream(spec, 3);
  const RffMap m = sample_rff(3, 200, 2.5);
  const agent::AgentConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(agent::run_episode(ds, {}, cfg, m, 4));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Episode)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
