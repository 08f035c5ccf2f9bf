/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include "vlplan/batcher.hpp"

#include <algorithm>
#include <cmath>

#include "vlplan/rng.hpp"
#include "json_util.hpp"

namespace vlplan {

const char* batch_policy_name(BatchPolicy p) noexcept {
  return p == BatchPolicy::Mixed ? "mixed" : "grouped";
}

namespace {

// Draw and timing use disjoint substreams of the caller's seed so that the
// same master seed can drive a whole run without cross-step correlation.
std::uint64_t draw_stream(std::uint64_t seed, long step) {
  return derive_seed(seed, 2 * static_cast<std::uint64_t>(step));
}
std::uint64_t time_stream(std::uint64_t seed, long step) {
  return derive_seed(seed, 2 * static_cast<std::uint64_t>(step) + 1);
}

int sample_length(const MixtureSpec& spec, std::size_t prob_index) {
  if (prob_index < spec.catalog.sources.size())
    return effective_seq_len(spec.catalog.sources[prob_index]);
  return kDefaultMultimodalSeqLen;  // sft admixture pseudo-source
}

void check_cost_model(const CostModel& model) {
  if (!(model.language_cost > 0.0) || !std::isfinite(model.language_cost))
    fail(Errc::InvalidArgument, "language_cost must be > 0");
  if (!(model.multimodal_cost > 0.0) || !std::isfinite(model.multimodal_cost))
    fail(Errc::InvalidArgument, "multimodal_cost must be > 0");
  if (model.jitter < 0.0 || !std::isfinite(model.jitter))
    fail(Errc::InvalidArgument, "jitter must be >= 0");
}

}  // namespace

GlobalStepPlan draw_step(const MixtureSpec& spec, long step, int batch_size,
                         BatchPolicy policy, std::uint64_t seed) {
  if (batch_size < 1) fail(Errc::InvalidArgument, "batch_size must be >= 1");

  const std::vector<SourceProbability> probs = mixture_at(spec, step);
  Rng rng(draw_stream(seed, step));

  GlobalStepPlan plan;
  plan.step = step;
  plan.policy = policy;

  std::vector<double> weights(probs.size(), 0.0);
  if (policy == BatchPolicy::Grouped) {
    const double lang = language_fraction_at(spec.warmup, step);
    const Modality drawn =
        rng.uniform01() < lang ? Modality::Language : Modality::Multimodal;
    plan.group_modality = drawn;
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i].modality == drawn) {
        weights[i] = probs[i].probability;
        total += weights[i];
      }
    }
    if (total <= 0.0)
      fail(Errc::EmptyModality,
           std::string("grouped step drew modality \"") + modality_name(drawn) +
               "\" but no source of that modality has probability > 0 at step " +
               std::to_string(step));
  } else {
    for (std::size_t i = 0; i < probs.size(); ++i)
      weights[i] = probs[i].probability;
  }

  std::vector<SampleSpec> batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  for (int n = 0; n < batch_size; ++n) {
    const std::size_t i = rng.categorical(weights);
    SampleSpec s;
    s.source = probs[i].source;
    s.modality = probs[i].modality;
    s.length = sample_length(spec, i);
    batch.push_back(std::move(s));
  }
  plan.batches.push_back(std::move(batch));
  return plan;
}

std::vector<PackedSequence> pack_sequences(const std::vector<SampleSpec>& samples,
                                           int capacity) {
  if (capacity < 1) fail(Errc::InvalidArgument, "capacity must be >= 1");
  std::vector<PackedSequence> packed;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int len = samples[i].length;
    if (len < 1)
      fail(Errc::InvalidArgument,
           "sample " + std::to_string(i) + " has non-positive length");
    if (len > capacity)
      fail(Errc::SampleTooLong,
           "sample " + std::to_string(i) + " (" + std::to_string(len) +
               " tokens) exceeds buffer capacity " + std::to_string(capacity));
    // First fit: earliest buffer with room wins; sample order is preserved
    // within each buffer because samples only ever append.
    PackedSequence* slot = nullptr;
    for (PackedSequence& buf : packed) {
      if (buf.used + len <= buf.capacity) { slot = &buf; break; }
    }
    if (slot == nullptr) {
      packed.push_back(PackedSequence{capacity, {}, 0});
      slot = &packed.back();
    }
    slot->sample_ids.push_back(static_cast<int>(i));
    slot->used += len;
  }
  return packed;
}

double packing_efficiency(const std::vector<PackedSequence>& packed) {
  if (packed.empty()) return 0.0;
  double used = 0.0;
  double capacity = 0.0;
  for (const PackedSequence& buf : packed) {
    used += buf.used;
    capacity += buf.capacity;
  }
  return capacity > 0.0 ? used / capacity : 0.0;
}

double step_time(const GlobalStepPlan& plan, const CostModel& model,
                 std::uint64_t seed) {
  check_cost_model(model);
  Rng rng(time_stream(seed, plan.step));
  double total = 0.0;
  for (const std::vector<SampleSpec>& batch : plan.batches) {
    double slowest = 0.0;
    for (const SampleSpec& s : batch) {
      const double base = s.modality == Modality::Language
                              ? model.language_cost
                              : model.multimodal_cost;
      const double j =
          model.jitter > 0.0 ? rng.unit_mean_lognormal(model.jitter) : 1.0;
      slowest = std::max(slowest, base * s.cost * j);
    }
    total += slowest;  // the whole batch waits on its straggler
  }
  return total;
}

ThroughputReport simulate_run(const MixtureSpec& spec, long steps,
                              int batch_size, BatchPolicy policy,
                              const CostModel& model, std::uint64_t seed) {
  if (steps < 0) fail(Errc::InvalidArgument, "steps must be >= 0");
  check_cost_model(model);

  ThroughputReport report;
  report.steps = steps;
  for (long s = 0; s < steps; ++s) {
    const GlobalStepPlan plan = draw_step(spec, s, batch_size, policy, seed);
    report.total_time += step_time(plan, model, seed);

    bool any_language = false;
    bool any_multimodal = false;
    for (const std::vector<SampleSpec>& batch : plan.batches) {
      report.samples += static_cast<long>(batch.size());
      for (const SampleSpec& sample : batch)
        (sample.modality == Modality::Language ? any_language
                                               : any_multimodal) = true;
    }
    if (any_language && any_multimodal)
      ++report.mixed_steps;
    else if (any_multimodal)
      ++report.multimodal_steps;
    else if (any_language)
      ++report.language_steps;
  }
  report.samples_per_second =
      report.total_time > 0.0 ? report.samples / report.total_time : 0.0;
  return report;
}

PolicyComparison compare_policies(const MixtureSpec& spec, long steps,
                                  int batch_size, const CostModel& model,
                                  std::uint64_t seed) {
  PolicyComparison cmp;
  cmp.grouped =
      simulate_run(spec, steps, batch_size, BatchPolicy::Grouped, model, seed);
  cmp.mixed =
      simulate_run(spec, steps, batch_size, BatchPolicy::Mixed, model, seed);
  cmp.speedup = cmp.grouped.total_time > 0.0
                    ? cmp.mixed.total_time / cmp.grouped.total_time
                    : 0.0;
  return cmp;
}

}  // namespace vlplan
