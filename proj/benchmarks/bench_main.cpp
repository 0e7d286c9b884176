#include <benchmark/benchmark.h>

#include "decopt/harness.hpp"

using namespace decopt;

namespace {

FamilySpec spec_for(Family f, std::int64_t n) { return {f, static_cast<std::size_t>(n)}; }

void BM_BuildMetropolis(benchmark::State& state) {
  const GraphSnapshot g = build_graph(spec_for(Family::kErdosRenyi, state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(metropolis(g));
}
BENCHMARK(BM_BuildMetropolis)->RangeMultiplier(4)->Range(16, 1024);

void BM_MixingApply(benchmark::State& state) {
  const GraphSnapshot g = build_graph(spec_for(Family::kErdosRenyi, state.range(0)), 1);
  const MixingMatrix m = lazy_metropolis(g);
  Eigen::MatrixXd x = harness::make_initial_state("random", g.size(), 4, 2);
  for (auto _ : state) {
    x = m.apply(x);
    benchmark::DoNotOptimize(x.data());
  }
}
BENCHMARK(BM_MixingApply)->RangeMultiplier(4)->Range(16, 4096);

void BM_Sigma2Svd(benchmark::State& state) {
  const MixingMatrix m = lazy_metropolis(build_graph(spec_for(Family::kPath, state.range(0)), 0));
  for (auto _ : state) benchmark::DoNotOptimize(sigma2_svd(m.entries()));
}
BENCHMARK(BM_Sigma2Svd)->RangeMultiplier(2)->Range(32, 256);

void BM_Sigma2Power(benchmark::State& state) {
  const MixingMatrix m = lazy_metropolis(build_graph(spec_for(Family::kGrid2d, state.range(0)), 0));
  for (auto _ : state) benchmark::DoNotOptimize(sigma2_power(m));
}
BENCHMARK(BM_Sigma2Power)->Arg(64)->Arg(256)->Arg(1024);

void BM_ConsensusPath(benchmark::State& state) {
  const auto seq = GraphSequence::fixed(build_graph(spec_for(Family::kPath, state.range(0)), 0));
  const WeightRule rule = make_weight_rule(WeightKind::kLazyMetropolis);
  const Eigen::MatrixXd x0 = harness::make_initial_state("linear", seq.size(), 1, 0);
  for (auto _ : state) benchmark::DoNotOptimize(run_consensus(seq, rule, x0, 1e-3, std::nullopt, 1000));
}
BENCHMARK(BM_ConsensusPath)->RangeMultiplier(2)->Range(16, 128)->Unit(benchmark::kMillisecond);

void BM_DigingGrid(benchmark::State& state) {
  const auto seq = GraphSequence::fixed(build_graph(spec_for(Family::kGrid2d, state.range(0)), 0));
  harness::OptimizeConfig o;
  o.objective = ObjectiveKind::kQuadratic;
  const ObjectiveSet set = harness::make_objective_set(o, seq.size(), 2, 3);
  const Eigen::MatrixXd x0 = harness::make_initial_state("random", seq.size(), 2, 4);
  const WeightRule rule = make_weight_rule(WeightKind::kLazyMetropolis);
  OptOptions options;
  options.trace_stride = 100;
  for (auto _ : state) benchmark::DoNotOptimize(diging(seq, rule, set, x0, std::nullopt, 500, options));
  state.SetItemsProcessed(state.iterations() * 500);
}
BENCHMARK(BM_DigingGrid)->Arg(16)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
