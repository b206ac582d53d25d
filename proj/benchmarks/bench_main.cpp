#include <benchmark/benchmark.h>

#include <algorithm>

#include "recon/domain.hpp"
#include "recon/experiment.hpp"
#include "recon/explainer.hpp"
#include "recon/learner.hpp"
#include "recon/reconciliation.hpp"

using namespace recon;

namespace {

void BM_ValueIteration(benchmark::State& state) {
  const char* names[] = {"warehouse", "four_rooms", "taxi"};
  const DomainSpec spec = load_named_layout(names[state.range(0)]);
  const Mdp m = spec.build(spec.schema().defaults());
  for (auto _ : state) benchmark::DoNotOptimize(value_iteration(m));
  state.SetLabel(names[state.range(0)]);
}
BENCHMARK(BM_ValueIteration)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);

void BM_TrainTree(benchmark::State& state) {
  const DomainSpec spec = load_named_layout("warehouse");
  const FeatureEncoder enc(spec);
  auto rows = enc.encode(generate_instance(spec, default_config("warehouse", 1), 0).rows);
  rows.resize(std::min(rows.size(), static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(train_tree(enc.schema(), rows));
  state.SetLabel(std::to_string(rows.size()) + " rows");
}
BENCHMARK(BM_TrainTree)->Arg(200)->Arg(1000)->Unit(benchmark::kMicrosecond);

void BM_MinimalExplanation(benchmark::State& state) {
  const DomainSpec spec = load_named_layout("warehouse");
  const Scenario sc = load_scenario(spec, std::string(RECON_DATA_DIR) + "/scenarios/warehouse_study.json");
  ExplanationQuery q;
  q.traces = {detour_trace(spec, sc)};
  for (auto _ : state) {
    benchmark::DoNotOptimize(minimal_complete_explanation(spec, sc.human, sc.robot, spec.messages(), q));
  }
}
BENCHMARK(BM_MinimalExplanation)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
