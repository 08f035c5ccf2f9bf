/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

// Microbenchmarks for the planning hot paths. These guard against accidental
// algorithmic regressions (the partitioner and pipeline simulator are the
// only super-linear pieces); absolute numbers are machine-dependent.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "vlplan/adaptor.hpp"
#include "vlplan/batcher.hpp"
#include "vlplan/mixture.hpp"
#include "vlplan/parallel.hpp"
#include "vlplan/rng.hpp"

namespace {

using namespace vlplan;

MixtureSpec steady_spec() {
  return make_mixture_spec(preset_catalog("table1"),
                           WarmupSchedule{1.0, 0.7, 0, WarmupShape::Linear});
}

void BM_MixtureDrawStep(benchmark::State& state) {
  const MixtureSpec spec = steady_spec();
  std::uint64_t seed = 0;
  for (auto _ : state) {
    const GlobalStepPlan plan =
        draw_step(spec, 100, static_cast<int>(state.range(0)),
                  BatchPolicy::Mixed, ++seed);
    benchmark::DoNotOptimize(plan.batches.front().size());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MixtureDrawStep)->Arg(64)->Arg(256)->Arg(1024);

void BM_PackSequences(benchmark::State& state) {
  const MixtureSpec spec = steady_spec();
  const GlobalStepPlan plan =
      draw_step(spec, 100, static_cast<int>(state.range(0)),
                BatchPolicy::Mixed, 42);
  const std::vector<SampleSpec>& samples = plan.batches.front();
  for (auto _ : state) {
    const auto packed = pack_sequences(samples, 8192);
    benchmark::DoNotOptimize(packed.size());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PackSequences)->Arg(256)->Arg(1024)->Arg(4096);

void BM_PartitionLayers(benchmark::State& state) {
  Rng rng(7);
  std::vector<LayerProfile> profiles;
  for (int i = 0; i < static_cast<int>(state.range(0)); ++i) {
    LayerProfile p;
    p.id = i;
    p.compute_cost = rng.uniform(0.05, 1.0);
    profiles.push_back(p);
  }
  for (auto _ : state) {
    const Partition part =
        partition_layers(profiles, static_cast<int>(state.range(1)));
    benchmark::DoNotOptimize(part.bottleneck);
  }
}
BENCHMARK(BM_PartitionLayers)->Args({32, 4})->Args({64, 8})->Args({128, 16});

void BM_SimulatePipeline(benchmark::State& state) {
  Topology topo;
  topo.pp = static_cast<int>(state.range(0));
  topo.microbatches = static_cast<int>(state.range(1));
  const std::vector<LayerProfile> profiles = preset_layer_profiles("7B", topo);
  const Partition part = partition_layers(profiles, topo.pp);
  for (auto _ : state) {
    const PipelineReport report =
        simulate_pipeline(part, topo, PipeSchedule::OneFOneB);
    benchmark::DoNotOptimize(report.step_time);
  }
}
BENCHMARK(BM_SimulatePipeline)->Args({4, 8})->Args({8, 32})->Args({8, 128});

void BM_AdaptorForward(benchmark::State& state) {
  AdaptorConfig config;
  config.hidden_dim = static_cast<int>(state.range(0));
  config.out_dim = static_cast<int>(state.range(0));
  const AdaptorParams params = init_adaptor_params(config, 1024, 1024, 11);
  const Matrix high = random_features(576, 1024, 1);
  const Matrix low = random_features(576, 1024, 2);
  for (auto _ : state) {
    const Matrix out = adaptor_forward(high, low, params);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(BM_AdaptorForward)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
