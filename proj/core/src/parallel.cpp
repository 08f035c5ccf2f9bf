/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include "vlplan/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace vlplan {

const char* layer_kind_name(LayerKind k) noexcept {
  switch (k) {
    case LayerKind::VisionFirstLayer: return "vision_first_layer";
    case LayerKind::TransformerBlock: return "transformer_block";
    case LayerKind::Head: return "head";
  }
  return "unknown";
}

const char* pipe_schedule_name(PipeSchedule s) noexcept {
  return s == PipeSchedule::GPipe ? "gpipe" : "1f1b";
}

namespace {

void check_dims(const ModelDims& dims) {
  if (dims.d_model < 1 || dims.n_layers < 1 || dims.vocab < 1 ||
      dims.ffn_mult_num < 1 || dims.ffn_mult_den < 1 ||
      dims.ffn_round_multiple < 1)
    fail(Errc::InvalidArgument, "model dims must all be positive");
}

void check_topology(const Topology& topo) {
  if (topo.pp < 1 || topo.tp < 1 || topo.dp < 1 || topo.microbatches < 1)
    fail(Errc::InvalidArgument, "topology fields must all be >= 1");
}

void check_profiles(const std::vector<LayerProfile>& profiles) {
  if (profiles.empty()) fail(Errc::InvalidArgument, "empty layer profile list");
  for (const LayerProfile& layer : profiles)
    if (!(layer.compute_cost > 0.0) || !std::isfinite(layer.compute_cost))
      fail(Errc::InvalidArgument,
           "layer " + std::to_string(layer.id) + " has non-positive cost");
}

}  // namespace

int ffn_inner_dim(const ModelDims& dims) {
  check_dims(dims);
  // Floor of (num/den)*d, then floor again to the rounding multiple.
  const std::int64_t raw = static_cast<std::int64_t>(dims.d_model) *
                           dims.ffn_mult_num / dims.ffn_mult_den;
  const std::int64_t rounded =
      raw / dims.ffn_round_multiple * dims.ffn_round_multiple;
  return static_cast<int>(std::max<std::int64_t>(rounded, 1));
}

double block_flops_per_token(const ModelDims& dims) {
  const double d = dims.d_model;
  const double inner = ffn_inner_dim(dims);
  return 8.0 * d * d + 6.0 * d * inner;
}

double head_flops_per_token(const ModelDims& dims) {
  check_dims(dims);
  return 2.0 * static_cast<double>(dims.d_model) * dims.vocab;
}

std::vector<LayerProfile> estimate_layer_costs(const ModelDims& dims,
                                               const Topology& topo,
                                               double vision_cost,
                                               const CostOptions& options) {
  check_dims(dims);
  check_topology(topo);
  if (!(vision_cost > 0.0) || !std::isfinite(vision_cost))
    fail(Errc::InvalidArgument, "vision_cost must be > 0");
  if (options.bytes_per_param < 1 || options.vision_param_bytes < 0 ||
      !(options.seconds_per_gflop > 0.0))
    fail(Errc::InvalidArgument, "invalid cost options");

  const double tp = topo.tp;
  const double block_pre_tp =
      options.block_cost
          ? *options.block_cost
          : block_flops_per_token(dims) * 1e-9 * options.seconds_per_gflop;
  if (!(block_pre_tp > 0.0))
    fail(Errc::InvalidArgument, "block cost must be > 0");

  const double bpp = options.bytes_per_param;
  const std::int64_t inner = ffn_inner_dim(dims);
  const std::int64_t d = dims.d_model;
  const std::int64_t block_params = 4 * d * d + 3 * d * inner;
  const std::int64_t embed_params = d * static_cast<std::int64_t>(dims.vocab);

  std::vector<LayerProfile> profiles;
  profiles.reserve(static_cast<std::size_t>(dims.n_layers) + 2);

  // The vision encoders + text embedding form the heterogeneous first layer.
  // Its forward is recomputed on every tensor-parallel rank (not sharded),
  // so the cost stays fixed as tp grows; the sharded embedding shrinks but
  // the replicated vision parameters do not.
  LayerProfile first;
  first.id = 0;
  first.kind = LayerKind::VisionFirstLayer;
  first.compute_cost = vision_cost;
  first.param_bytes =
      options.vision_param_bytes +
      static_cast<std::int64_t>(embed_params * bpp / tp);
  profiles.push_back(first);

  for (int i = 0; i < dims.n_layers; ++i) {
    LayerProfile block;
    block.id = static_cast<int>(profiles.size());
    block.kind = LayerKind::TransformerBlock;
    block.compute_cost = block_pre_tp / tp;
    block.param_bytes = static_cast<std::int64_t>(block_params * bpp / tp);
    profiles.push_back(block);
  }

  if (options.include_head) {
    LayerProfile head;
    head.id = static_cast<int>(profiles.size());
    head.kind = LayerKind::Head;
    head.compute_cost =
        head_flops_per_token(dims) * 1e-9 * options.seconds_per_gflop / tp;
    head.param_bytes = static_cast<std::int64_t>(embed_params * bpp / tp);
    profiles.push_back(head);
  }
  return profiles;
}

ModelDims model_dims_preset(std::string_view name) {
  if (name == "1B") return ModelDims{2048, 24, 8, 3, 102400, 1};
  if (name == "7B") return ModelDims{4096, 30, 8, 3, 102400, 1};
  fail(Errc::ConfigError, "unknown model dims preset \"" + std::string(name) +
                              "\" (available: 1B, 7B)");
}

std::vector<LayerProfile> preset_layer_profiles(std::string_view name,
                                                const Topology& topo,
                                                const CostOptions& options) {
  const ModelDims dims = model_dims_preset(name);
  // Pre-tp block cost under the same options the caller will use; the vision
  // layer is pinned at 0.3x a block so the first layer is lighter than a
  // block by construction.
  const double block_pre_tp =
      options.block_cost
          ? *options.block_cost
          : block_flops_per_token(dims) * 1e-9 * options.seconds_per_gflop;
  return estimate_layer_costs(dims, topo, 0.3 * block_pre_tp, options);
}

Partition naive_partition(const std::vector<LayerProfile>& profiles,
                          int stages) {
  check_profiles(profiles);
  const int n = static_cast<int>(profiles.size());
  if (stages < 1) fail(Errc::InvalidArgument, "stages must be >= 1");
  if (stages > n)
    fail(Errc::TooManyStages, std::to_string(stages) + " stages for " +
                                  std::to_string(n) + " layers");
  Partition part;
  const int base = n / stages;
  const int extra = n % stages;
  int begin = 0;
  for (int s = 0; s < stages; ++s) {
    StageRange range;
    range.begin = begin;
    range.end = begin + base + (s < extra ? 1 : 0);
    for (int i = range.begin; i < range.end; ++i) {
      range.cost += profiles[i].compute_cost;
      range.param_bytes += profiles[i].param_bytes;
    }
    part.bottleneck = std::max(part.bottleneck, range.cost);
    begin = range.end;
    part.stages.push_back(range);
  }
  return part;
}

Partition partition_layers(const std::vector<LayerProfile>& profiles,
                           int stages) {
  check_profiles(profiles);
  const int n = static_cast<int>(profiles.size());
  if (stages < 1) fail(Errc::InvalidArgument, "stages must be >= 1");
  if (stages > n)
    fail(Errc::TooManyStages, std::to_string(stages) + " stages for " +
                                  std::to_string(n) + " layers");

  std::vector<double> prefix(static_cast<std::size_t>(n) + 1, 0.0);
  for (int i = 0; i < n; ++i)
    prefix[i + 1] = prefix[i] + profiles[i].compute_cost;
  const auto range_cost = [&](int a, int b) { return prefix[b] - prefix[a]; };

  // dp[i] = minimal bottleneck splitting the first i layers into j stages.
  // Exact DP is cheap at these sizes (layers ~100, stages ~16).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dp(static_cast<std::size_t>(n) + 1, inf);
  for (int i = 1; i <= n; ++i) dp[i] = range_cost(0, i);
  for (int j = 2; j <= stages; ++j) {
    std::vector<double> next(static_cast<std::size_t>(n) + 1, inf);
    for (int i = j; i <= n; ++i) {
      double best = inf;
      for (int x = j - 1; x < i; ++x)
        best = std::min(best, std::max(dp[x], range_cost(x, i)));
      next[i] = best;
    }
    dp = std::move(next);
  }
  const double bottleneck = dp[static_cast<std::size_t>(n)];

  // Minimal number of stages needed to cover [from, n) with per-stage cost
  // <= bottleneck (greedy max-fill). Comparisons reuse the same prefix-sum
  // differences the DP used, so no epsilon is needed.
  const auto min_stages_from = [&](int from) {
    int count = 0;
    int at = from;
    while (at < n) {
      int to = at + 1;
      while (to < n && range_cost(at, to + 1) <= bottleneck) ++to;
      at = to;
      ++count;
    }
    return count;
  };

  // Reconstruct with lexicographically earliest boundaries: each stage takes
  // the fewest layers that keep the suffix feasible in the remaining stages.
  Partition part;
  part.bottleneck = bottleneck;
  int begin = 0;
  for (int s = 0; s < stages; ++s) {
    const int remaining = stages - s - 1;
    int end;
    if (remaining == 0) {
      end = n;
    } else {
      end = begin + 1;
      while (end < n - remaining &&
             !(range_cost(begin, end) <= bottleneck &&
               min_stages_from(end) <= remaining))
        ++end;
    }
    StageRange range;
    range.begin = begin;
    range.end = end;
    range.cost = range_cost(begin, end);
    for (int i = begin; i < end; ++i) range.param_bytes += profiles[i].param_bytes;
    part.stages.push_back(range);
    begin = end;
  }
  return part;
}

namespace {

void check_pipeline_args(const Partition& partition, const Topology& topo,
                         const PipelineOptions& options) {
  if (partition.stages.empty())
    fail(Errc::InvalidArgument, "partition has no stages");
  int expected = 0;
  for (const StageRange& s : partition.stages) {
    if (s.begin != expected || s.end <= s.begin)
      fail(Errc::InvalidArgument, "partition ranges must tile [0, n) in order");
    expected = s.end;
    if (!(s.cost > 0.0)) fail(Errc::InvalidArgument, "stage cost must be > 0");
  }
  check_topology(topo);
  if (options.backward_ratio < 0.0 || !std::isfinite(options.backward_ratio))
    fail(Errc::InvalidArgument, "backward_ratio must be >= 0");
  if (options.comm_cost < 0.0 || !std::isfinite(options.comm_cost))
    fail(Errc::InvalidArgument, "comm_cost must be >= 0");
}

// GPipe: every stage runs all m forwards, then all m backwards in reverse
// microbatch order. Recurrences over (stage, microbatch) end times; O(p*m).
double gpipe_step_time(const std::vector<double>& f, const std::vector<double>& b,
                       int m, double c) {
  const int p = static_cast<int>(f.size());
  std::vector<double> prev(static_cast<std::size_t>(m), 0.0);  // stage i-1 F ends
  std::vector<double> cur(static_cast<std::size_t>(m), 0.0);
  std::vector<double> forward_done(static_cast<std::size_t>(p), 0.0);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < m; ++j) {
      const double stage_free = j > 0 ? cur[j - 1] : 0.0;
      const double input_ready = i > 0 ? prev[j] + c : 0.0;
      cur[j] = std::max(stage_free, input_ready) + f[i];
    }
    forward_done[i] = cur[m - 1];
    prev = cur;
  }
  // Backward wave, last stage first. A stage may not start backwards before
  // its own forwards are done (all-forward-then-all-backward discipline).
  std::vector<double> next_b(static_cast<std::size_t>(m), 0.0);
  std::vector<double> cur_b(static_cast<std::size_t>(m), 0.0);
  for (int i = p - 1; i >= 0; --i) {
    for (int r = 0; r < m; ++r) {
      const double stage_free = r > 0 ? cur_b[r - 1] : forward_done[i];
      const double grad_ready = i < p - 1 ? next_b[r] + c : 0.0;
      cur_b[r] = std::max(stage_free, grad_ready) + b[i];
    }
    next_b = cur_b;
  }
  return cur_b[m - 1];
}

// 1F1B: warmup of min(m, p - i) forwards per stage, then strict
// one-backward-one-forward alternation, then the backward drain. Simulated
// by releasing each stage's fixed op sequence as dependencies resolve.
double one_f_one_b_step_time(const std::vector<double>& f,
                             const std::vector<double>& b, int m, double c) {
  const int p = static_cast<int>(f.size());
  struct Op {
    bool backward;
    int micro;
  };
  std::vector<std::vector<Op>> ops(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) {
    const int warmup = std::min(m, p - i);
    std::vector<Op>& seq = ops[static_cast<std::size_t>(i)];
    int fwd = 0;
    int bwd = 0;
    for (; fwd < warmup; ++fwd) seq.push_back({false, fwd});
    while (fwd < m) {
      seq.push_back({true, bwd++});
      seq.push_back({false, fwd++});
    }
    while (bwd < m) seq.push_back({true, bwd++});
  }

  const double unset = -1.0;
  std::vector<std::vector<double>> f_end(
      static_cast<std::size_t>(p),
      std::vector<double>(static_cast<std::size_t>(m), unset));
  std::vector<std::vector<double>> b_end(
      static_cast<std::size_t>(p),
      std::vector<double>(static_cast<std::size_t>(m), unset));
  std::vector<std::size_t> pos(static_cast<std::size_t>(p), 0);
  std::vector<double> stage_free(static_cast<std::size_t>(p), 0.0);

  std::size_t done = 0;
  const std::size_t total = static_cast<std::size_t>(p) * m * 2;
  while (done < total) {
    bool progressed = false;
    for (int i = 0; i < p; ++i) {
      while (pos[i] < ops[i].size()) {
        const Op op = ops[i][pos[i]];
        double dep;
        if (!op.backward) {
          if (i == 0)
            dep = 0.0;
          else if (f_end[i - 1][op.micro] == unset)
            break;
          else
            dep = f_end[i - 1][op.micro] + c;
        } else {
          if (i == p - 1) {
            if (f_end[i][op.micro] == unset) break;
            dep = f_end[i][op.micro];  // own forward, no hop
          } else if (b_end[i + 1][op.micro] == unset) {
            break;
          } else {
            dep = b_end[i + 1][op.micro] + c;
          }
        }
        const double start = std::max(stage_free[i], dep);
        const double end = start + (op.backward ? b[i] : f[i]);
        (op.backward ? b_end : f_end)[i][op.micro] = end;
        stage_free[i] = end;
        ++pos[i];
        ++done;
        progressed = true;
      }
    }
    if (!progressed)
      fail(Errc::InvalidArgument, "pipeline schedule deadlocked (internal)");
  }
  return b_end[0][m - 1];
}

}  // namespace

PipelineReport simulate_pipeline(const Partition& partition,
                                 const Topology& topo, PipeSchedule schedule,
                                 const PipelineOptions& options) {
  check_pipeline_args(partition, topo, options);
  const int p = static_cast<int>(partition.stages.size());
  const int m = topo.microbatches;
  const double c = options.overlap_comm ? 0.0 : options.comm_cost;

  std::vector<double> f(static_cast<std::size_t>(p));
  std::vector<double> b(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) {
    f[i] = partition.stages[i].cost;
    b[i] = options.backward_ratio * f[i];
  }

  PipelineReport report;
  report.schedule = schedule;
  report.step_time = schedule == PipeSchedule::GPipe
                         ? gpipe_step_time(f, b, m, c)
                         : one_f_one_b_step_time(f, b, m, c);

  double useful_total = 0.0;
  report.stage_utilization.reserve(static_cast<std::size_t>(p));
  report.stage_param_bytes.reserve(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) {
    const double useful = m * (f[i] + b[i]);
    useful_total += useful;
    report.stage_utilization.push_back(useful / report.step_time);
    report.stage_param_bytes.push_back(partition.stages[i].param_bytes);
  }
  report.bubble_fraction = 1.0 - useful_total / (p * report.step_time);
  return report;
}

PartitionComparison compare_partitions(const std::vector<LayerProfile>& profiles,
                                       int stages, const Topology& topo,
                                       PipeSchedule schedule,
                                       const PipelineOptions& options) {
  PartitionComparison cmp;
  cmp.optimized = partition_layers(profiles, stages);
  cmp.naive = naive_partition(profiles, stages);
  cmp.optimized_report = simulate_pipeline(cmp.optimized, topo, schedule, options);
  cmp.naive_report = simulate_pipeline(cmp.naive, topo, schedule, options);
  cmp.improvement = cmp.optimized_report.step_time > 0.0
                        ? cmp.naive_report.step_time / cmp.optimized_report.step_time
                        : 1.0;
  return cmp;
}

}  // namespace vlplan
