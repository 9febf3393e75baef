#include <random>

#include <benchmark/benchmark.h>

#include "shapetest/cones.hpp"
#include "shapetest/isotonic.hpp"
#include "shapetest/mc.hpp"
#include "shapetest/testing.hpp"

using namespace shapetest;

namespace {

Eigen::VectorXd noise(Eigen::Index k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::VectorXd v(k);
  for (auto& x : v) x = nd(rng);
  return v;
}

void BM_Pava(benchmark::State& state) {
  const auto k = state.range(0);
  const isotonic::Problem p{noise(k, 1), Eigen::VectorXd::Ones(k), isotonic::Direction::Nondecreasing};
  for (auto _ : state) benchmark::DoNotOptimize(isotonic::pava(p));
  state.SetComplexityN(k);
}
BENCHMARK(BM_Pava)->RangeMultiplier(4)->Range(64, 16384)->Complexity();

void BM_MonotoneQp1D(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  auto grid = make_grid({{0.0, 1.0}}, {k});
  cones::Projector projector(cones::ConeSpec::increasing(1), grid);
  projector.set_use_pava(false);
  const FunctionGrid f(grid, noise(k, 2));
  for (auto _ : state) benchmark::DoNotOptimize(projector.project(f));
}
BENCHMARK(BM_MonotoneQp1D)->Arg(37)->Arg(101)->Arg(401);

void BM_MonotoneProjection2D(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto grid = make_grid({{0.0, 1.0}, {0.0, 1.0}}, {n, n});
  cones::Projector projector(cones::ConeSpec::increasing(2), grid);
  const FunctionGrid f(grid, noise(n * n, 3));
  for (auto _ : state) benchmark::DoNotOptimize(projector.project(f));
}
BENCHMARK(BM_MonotoneProjection2D)->Arg(9)->Arg(17)->Arg(25)->Unit(benchmark::kMillisecond);

void BM_ConcaveProjection2D(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto grid = make_grid({{0.0, 1.0}, {0.0, 1.0}}, {n, n});
  cones::Projector projector(cones::ConcaveMultivariate{}, grid);
  const FunctionGrid f(grid, noise(n * n, 4));
  for (auto _ : state) benchmark::DoNotOptimize(projector.project(f));
}
BENCHMARK(BM_ConcaveProjection2D)->Arg(4)->Arg(5)->Arg(7)->Unit(benchmark::kMillisecond);

void BM_RunTestMc1(benchmark::State& state) {
  const auto design = mc::mc1_null(1, static_cast<int>(state.range(0)));
  const auto cfg = mc::default_study(design);
  int rep = 0;
  for (auto _ : state) benchmark::DoNotOptimize(mc::run_replication(design, cfg, rep++));
}
BENCHMARK(BM_RunTestMc1)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_RunTestMc2(benchmark::State& state) {
  const auto design = mc::mc2_null(1, 500);
  const auto cfg = mc::default_study(design);
  int rep = 0;
  for (auto _ : state) benchmark::DoNotOptimize(mc::run_replication(design, cfg, rep++));
}
BENCHMARK(BM_RunTestMc2)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
