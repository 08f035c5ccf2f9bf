/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "vlplan/error.hpp"

namespace vlplan {

/// Transformer dimensions used by the per-token FLOP cost model. The
/// feed-forward inner width is ffn_mult_num/ffn_mult_den * d_model (default
/// 8/3, the gated-FFN convention), floored to the nearest lower multiple of
/// ffn_round_multiple.
struct ModelDims {
  int d_model = 0;
  int n_layers = 0;
  int ffn_mult_num = 8;
  int ffn_mult_den = 3;
  int vocab = 0;
  int ffn_round_multiple = 1;
};

int ffn_inner_dim(const ModelDims& dims);

/// Per-token FLOPs of one transformer block: 8*d^2 for the four attention
/// projections plus 6*d*inner for the three gated feed-forward matmuls
/// (multiply-add = 2 FLOPs). Sequence-length-dependent attention-score work
/// is deliberately excluded; the model is a relative cost estimate.
double block_flops_per_token(const ModelDims& dims);

/// Per-token FLOPs of the output head projection (2 * d * vocab).
double head_flops_per_token(const ModelDims& dims);

enum class LayerKind { VisionFirstLayer, TransformerBlock, Head };

const char* layer_kind_name(LayerKind k) noexcept;

/// One schedulable layer with its simulated forward cost.
struct LayerProfile {
  int id = 0;
  LayerKind kind = LayerKind::TransformerBlock;
  double compute_cost = 0.0;      // simulated seconds, forward pass
  std::int64_t param_bytes = 0;   // per-rank parameter memory
};

struct Topology {
  int pp = 1;           // pipeline stages
  int tp = 1;           // tensor-parallel ranks
  int dp = 1;           // data-parallel ranks
  int microbatches = 1;
};

/// Knobs of the layer cost model; every field is echoed into reports as an
/// assumption, since real profiles are not available at desk scale.
struct CostOptions {
  double seconds_per_gflop = 1.0;
  /// Explicit per-block forward cost (before tensor-parallel division);
  /// bypasses the FLOP model when set.
  std::optional<double> block_cost;
  bool include_head = false;
  /// Parameter bytes of the vision encoders fused into the first layer
  /// (replicated across tensor-parallel ranks). Illustrative default.
  std::int64_t vision_param_bytes = 780'000'000;
  int bytes_per_param = 2;
};

/// Builds the layer-cost sequence: one VisionFirstLayer (the vision encoders
/// plus the text embedding fused as a heterogeneous first layer), then
/// n_layers transformer blocks, then optionally the head.
///
/// Tensor parallelism divides block and head compute by tp, but NOT the
/// first layer's: the vision encoder forward is recomputed on every
/// tensor-parallel rank rather than sharded, so its cost is replicated.
/// Parameter bytes are divided by tp except the vision encoder's.
std::vector<LayerProfile> estimate_layer_costs(const ModelDims& dims,
                                               const Topology& topo,
                                               double vision_cost,
                                               const CostOptions& options = {});

/// Model presets for the two reference sizes ("1B": d_model 2048, 24 blocks;
/// "7B": d_model 4096, 30 blocks; vocab 102400 both). The vision first-layer
/// cost defaults to 0.3x the block cost, keeping it lighter than a block by
/// construction. Both the dims and the generated profiles are illustrative
/// assumptions, surfaced in report headers.
ModelDims model_dims_preset(std::string_view name);
std::vector<LayerProfile> preset_layer_profiles(std::string_view name,
                                                const Topology& topo,
                                                const CostOptions& options = {});

/// One pipeline stage: layers [begin, end) of the profile list.
struct StageRange {
  int begin = 0;
  int end = 0;
  double cost = 0.0;              // sum of forward compute costs
  std::int64_t param_bytes = 0;
};

struct Partition {
  std::vector<StageRange> stages;
  double bottleneck = 0.0;  // max stage cost
};

/// Exact min-max contiguous partition of the layer sequence into `stages`
/// stages (dynamic programming over prefix sums; instances are small enough
/// that exactness is cheap). Ties are broken by lexicographically earliest
/// stage boundaries. stages > layer count is TooManyStages.
Partition partition_layers(const std::vector<LayerProfile>& profiles,
                           int stages);

/// Equal-layer-count split (extra layers go to the earliest stages); the
/// baseline that ignores per-layer cost.
Partition naive_partition(const std::vector<LayerProfile>& profiles,
                          int stages);

enum class PipeSchedule { GPipe, OneFOneB };

const char* pipe_schedule_name(PipeSchedule s) noexcept;

struct PipelineOptions {
  double backward_ratio = 2.0;  // backward cost = ratio * forward, per layer
  double comm_cost = 0.0;       // per stage boundary per microbatch activation hop
  bool overlap_comm = false;    // true = comm fully overlapped (off critical path)
};

struct PipelineReport {
  PipeSchedule schedule = PipeSchedule::GPipe;
  double step_time = 0.0;
  double bubble_fraction = 0.0;              // 1 - useful/(stages * step_time)
  std::vector<double> stage_utilization;     // useful_i / step_time
  std::vector<std::int64_t> stage_param_bytes;
};

/// Event-driven simulation of one training step over `topo.microbatches`
/// microbatches. GPipe runs all forwards then all backwards; 1F1B drains
/// forwards per stage (warmup of min(m, p - i) microbatches) and then
/// alternates one-forward-one-backward. Backward cost = backward_ratio *
/// forward per stage.
PipelineReport simulate_pipeline(const Partition& partition,
                                 const Topology& topo, PipeSchedule schedule,
                                 const PipelineOptions& options = {});

/// Cost-aware vs naive-equal-count partition, both simulated under the same
/// schedule. The optimized partition's bottleneck never exceeds the naive
/// one's, and with enough microbatches the bottleneck dominates the step
/// time. When both layouts share the same bottleneck, though, the step times
/// can differ slightly either way: the pipeline ramp and drain depend on
/// where the lighter stages sit, not only on the bottleneck.
struct PartitionComparison {
  Partition optimized;
  PipelineReport optimized_report;
  Partition naive;
  PipelineReport naive_report;
  double improvement = 1.0;  // naive.step_time / optimized.step_time
};

PartitionComparison compare_partitions(const std::vector<LayerProfile>& profiles,
                                       int stages, const Topology& topo,
                                       PipeSchedule schedule,
                                       const PipelineOptions& options = {});

}  // namespace vlplan
