/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vlplan/mixture.hpp"

namespace vlplan {

/// How samples are assembled into device batches.
///  - Mixed: every batch samples the full per-step distribution, so language
///    and multimodal samples share batches.
///  - Grouped: the modality is drawn once per step from the modality
///    marginal, then the whole batch comes from that modality's conditional
///    distribution. Grouping avoids paying the slow-modality straggler cost
///    on mostly-fast batches.
enum class BatchPolicy { Mixed, Grouped };

const char* batch_policy_name(BatchPolicy p) noexcept;

/// One drawn sample. `cost` is a relative per-sample cost scale (default 1);
/// the realized simulated time is cost_model.base(modality) * cost * jitter.
struct SampleSpec {
  std::string source;
  Modality modality = Modality::Language;
  int length = 0;     // tokens (the source's mean length; lengths are not resampled)
  double cost = 1.0;
};

/// Per-sample base costs in simulated seconds plus a lognormal jitter spread.
/// The default multimodal cost (ratio 1.714 to language) is calibrated so
/// that at a 60/40 multimodal/language mix, grouped batching is ~1.20x
/// faster than mixed batching under the straggler model (batch time = max
/// per-sample time): c_m / (0.6*c_m + 0.4*c_l) = 1.20 at c_m = 1.714.
struct CostModel {
  double language_cost = 1.0;
  double multimodal_cost = 1.714;
  double jitter = 0.0;  // relative spread of the unit-mean lognormal factor
};

/// The batch plan for one global step.
struct GlobalStepPlan {
  long step = 0;
  BatchPolicy policy = BatchPolicy::Mixed;
  std::vector<std::vector<SampleSpec>> batches;  // one batch per step here
  std::optional<Modality> group_modality;        // set iff policy == Grouped
};

/// Draws one global step's batch from the mixture at `step`. Deterministic in
/// (spec, step, batch_size, policy, seed). Grouped draws the modality first;
/// if the drawn modality has no positive-probability source at this step the
/// spec is inconsistent and EmptyModality is raised.
GlobalStepPlan draw_step(const MixtureSpec& spec, long step, int batch_size,
                         BatchPolicy policy, std::uint64_t seed);

/// A fixed-capacity token buffer holding whole samples back to back.
struct PackedSequence {
  int capacity = 0;
  std::vector<int> sample_ids;  // indices into the input sample list, in order
  int used = 0;                 // total tokens occupied
};

/// First-fit packing of samples (in the given order) into the fewest buffers
/// that first-fit yields: each sample goes into the earliest buffer with
/// room, else opens a new buffer. Order within a buffer preserves input
/// order. A sample longer than the capacity is SampleTooLong.
std::vector<PackedSequence> pack_sequences(const std::vector<SampleSpec>& samples,
                                           int capacity);

/// Fraction of capacity occupied across all buffers (0 for no buffers).
double packing_efficiency(const std::vector<PackedSequence>& packed);

/// Simulated wall time of one step under the straggler model: each batch
/// costs the max over its samples of base(modality) * cost * jitter, and
/// batches run sequentially. Deterministic in (plan, model, seed).
double step_time(const GlobalStepPlan& plan, const CostModel& model,
                 std::uint64_t seed);

struct ThroughputReport {
  long steps = 0;
  long samples = 0;
  double total_time = 0.0;       // simulated seconds
  double samples_per_second = 0.0;
  long language_steps = 0;       // steps whose batches were all-language
  long multimodal_steps = 0;     // steps whose batches were all-multimodal
  long mixed_steps = 0;          // steps with both modalities present
};

/// Runs `steps` global steps from step 0, drawing and timing each one.
ThroughputReport simulate_run(const MixtureSpec& spec, long steps,
                              int batch_size, BatchPolicy policy,
                              const CostModel& model, std::uint64_t seed);

struct PolicyComparison {
  ThroughputReport grouped;
  ThroughputReport mixed;
  double speedup = 0.0;  // mixed.total_time / grouped.total_time
};

/// Simulates both policies with identical parameters and seed.
PolicyComparison compare_policies(const MixtureSpec& spec, long steps,
                                  int batch_size, const CostModel& model,
                                  std::uint64_t seed);

}  // namespace vlplan
