#include <benchmark/benchmark.h>

#include "mveq/verify.hpp"

using namespace mveq;

namespace {

MarketModel random_rate_market(int steps, LatticeMode mode) {
  Scenario s;
  s.steps = steps;
  s.mode = mode;
  s.r = AffineWalkCoefficient{{0.02}, 0.01};
  s.b = AffineWalkCoefficient{{0.06}, 0.01};
  s.sigma = ConstantCoefficient{0.2};
  s.gamma1 = 1.0;
  s.x0 = 1.0;
  return build_market(s, s.grid());
}

void BM_RiccatiRecombining(benchmark::State& state) {
  const MarketModel m = random_rate_market(static_cast<int>(state.range(0)), LatticeMode::Recombining);
  for (auto _ : state) benchmark::DoNotOptimize(solve_riccati(m));
}
BENCHMARK(BM_RiccatiRecombining)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_CertifyRecombining(benchmark::State& state) {
  const MarketModel m = random_rate_market(static_cast<int>(state.range(0)), LatticeMode::Recombining);
  const RiccatiSolution sol = solve_riccati(m);
  for (auto _ : state) benchmark::DoNotOptimize(certify_equilibrium(m, sol, Tolerances{}));
}
BENCHMARK(BM_CertifyRecombining)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_RiccatiFullTree(benchmark::State& state) {
  const MarketModel m = random_rate_market(static_cast<int>(state.range(0)), LatticeMode::FullTree);
  for (auto _ : state) benchmark::DoNotOptimize(solve_riccati(m));
}
BENCHMARK(BM_RiccatiFullTree)->Arg(12)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_CertifyFullTree(benchmark::State& state) {
  const MarketModel m = random_rate_market(static_cast<int>(state.range(0)), LatticeMode::FullTree);
  const RiccatiSolution sol = solve_riccati(m);
  for (auto _ : state) benchmark::DoNotOptimize(certify_equilibrium(m, sol, Tolerances{}));
}
BENCHMARK(BM_CertifyFullTree)->Arg(6)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_FixedPoint(benchmark::State& state) {
  const MarketModel m = random_rate_market(static_cast<int>(state.range(0)), LatticeMode::FullTree);
  const RiccatiSolution sol = solve_riccati(m);
  const AdaptedProcess u0(m.grid, m.grid.steps() - 1);
  for (auto _ : state) benchmark::DoNotOptimize(fixed_point_refine(m, u0, m.x0, sol, 50, 1e-8));
}
BENCHMARK(BM_FixedPoint)->Arg(8)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
