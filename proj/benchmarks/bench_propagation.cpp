#include <benchmark/benchmark.h>

#include "spinsq/dynamics.hpp"
#include "spinsq/hamiltonians.hpp"
#include "spinsq/noise.hpp"
#include "spinsq/squeezing.hpp"

using namespace spinsq;

namespace {

void BM_TaylorAction(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto ops = build_collective_operators(SpinSystem(n));
  const Operator h = build_dr(ops, 1.0);
  const PureState psi = PureState::all_down(ops.system);
  for (auto _ : state) {
    benchmark::DoNotOptimize(taylor_exponential_action(h, 1e-3, psi));
  }
}
BENCHMARK(BM_TaylorAction)->Arg(10)->Arg(100)->Arg(500);

// One control period of the driven system (K = 128 substeps).
void BM_DrivenPeriod(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const bool toggling = state.range(1) != 0;
  const auto ops = build_collective_operators(SpinSystem(n));
  const ControlParams params(1.0, 2, 1, 0.01);
  const DrivenHamiltonian driven(params, ops);
  const FramedHamiltonian h =
      toggling ? driven.toggling_frame() : FramedHamiltonian(driven.linear());
  const PureState psi = PureState::all_down(ops.system);
  const StepPolicy policy;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        propagate_driven(h, psi, params.period(), params.period(), policy, ops));
  }
  state.SetItemsProcessed(state.iterations() * policy.substeps_per_period);
}
BENCHMARK(BM_DrivenPeriod)->ArgsProduct({{10, 100}, {0, 1}})->Unit(benchmark::kMicrosecond);

void BM_OUPath(benchmark::State& state) {
  const auto steps = static_cast<std::size_t>(state.range(0));
  std::uint64_t seed = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_ou_path(OUParams{2.0, 20.0}, steps, 1e-3, seed++));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 3);
}
BENCHMARK(BM_OUPath)->Arg(1 << 12)->Arg(1 << 20)->Unit(benchmark::kMicrosecond);

void BM_MomentsAndSqueezing(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto ops = build_collective_operators(SpinSystem(n));
  const MomentEvaluator evaluate(ops);
  const PureState psi =
      HermitianSpectrum(build_oat(ops, 1.0)).evolve(PureState::all_down(ops.system), 0.05);
  for (auto _ : state) {
    const SpinMoments m = evaluate(psi);
    benchmark::DoNotOptimize(xi_s_squared(m, n));
  }
}
BENCHMARK(BM_MomentsAndSqueezing)->Arg(10)->Arg(100)->Arg(500);

void BM_Spectrum(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto ops = build_collective_operators(SpinSystem(n));
  const Operator h = build_tat(ops, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(HermitianSpectrum(h));
  }
}
BENCHMARK(BM_Spectrum)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
