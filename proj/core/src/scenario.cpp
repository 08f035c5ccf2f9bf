/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include "vlplan/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <utility>

#include "vlplan/adaptor.hpp"
#include "vlplan/batcher.hpp"
#include "vlplan/catalog.hpp"
#include "vlplan/evalproto.hpp"
#include "vlplan/fusion.hpp"
#include "vlplan/mixture.hpp"
#include "vlplan/parallel.hpp"
#include "vlplan/rng.hpp"
#include "vlplan/schedules.hpp"
#include "json_util.hpp"

namespace vlplan {

using detail::json;

const char* target_name(Target t) noexcept {
  switch (t) {
    case Target::Mixture:
      return "mixture";
    case Target::SimulateBatching:
      return "simulate-batching";
    case Target::Pack:
      return "pack";
    case Target::Partition:
      return "partition";
    case Target::Pipeline:
      return "pipeline";
    case Target::Shapes:
      return "shapes";
    case Target::AdaptorCheck:
      return "adaptor-check";
    case Target::Lr:
      return "lr";
    case Target::Eval:
      return "eval";
  }
  return "?";
}

Target parse_target(std::string_view name) {
  static constexpr Target all[] = {
      Target::Mixture,  Target::SimulateBatching, Target::Pack,
      Target::Partition, Target::Pipeline,        Target::Shapes,
      Target::AdaptorCheck, Target::Lr,           Target::Eval,
  };
  for (Target t : all)
    if (name == target_name(t)) return t;
  fail(Errc::ConfigError,
       "unknown target \"" + std::string(name) +
           "\" (expected mixture, simulate-batching, pack, partition, "
           "pipeline, shapes, adaptor-check, lr, or eval)");
}

const char* report_format_name(ReportFormat f) noexcept {
  switch (f) {
    case ReportFormat::JsonLines:
      return "json-lines";
    case ReportFormat::Csv:
      return "csv";
    case ReportFormat::PrettyTable:
      return "pretty-table";
  }
  return "?";
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "json-lines") return ReportFormat::JsonLines;
  if (name == "csv") return ReportFormat::Csv;
  if (name == "pretty-table") return ReportFormat::PrettyTable;
  fail(Errc::UnsupportedFormat,
       "unknown report format \"" + std::string(name) +
           "\" (expected json-lines, csv, or pretty-table)");
}

bool operator==(const Scenario& a, const Scenario& b) {
  return a.name == b.name && a.target == b.target && a.seed == b.seed &&
         a.format == b.format && a.params == b.params;
}

bool operator==(const Report& a, const Report& b) {
  return a.schema_version == b.schema_version && a.scenario == b.scenario &&
         a.record_fields == b.record_fields && a.records == b.records &&
         a.summary == b.summary;
}

namespace {

// ---------------------------------------------------------------------------
// Parameter access
// ---------------------------------------------------------------------------

std::string value_type_name(const Value& v) {
  switch (v.index()) {
    case 0:
      return "bool";
    case 1:
      return "integer";
    case 2:
      return "number";
    default:
      return "string";
  }
}

/// Typed access to scenario.params. Every read registers the key and its
/// resolved value (given or default), so that after the target has read its
/// parameters we can (a) reject any key the target never asked for and
/// (b) echo the fully-resolved parameter set into the report.
class Params {
 public:
  explicit Params(const Scenario& scenario) : scenario_(scenario) {}

  std::string get_string(const std::string& name, std::string def) {
    const Value* v = lookup(name);
    if (v != nullptr) {
      if (const auto* s = std::get_if<std::string>(v)) def = *s;
      else type_error(name, *v, "string");
    }
    resolved_.set(name, def);
    return def;
  }

  long get_int(const std::string& name, long def) {
    const Value* v = lookup(name);
    if (v != nullptr) {
      if (const auto* i = std::get_if<std::int64_t>(v)) {
        def = static_cast<long>(*i);
      } else if (const auto* d = std::get_if<double>(v)) {
        if (*d != std::floor(*d)) type_error(name, *v, "integer");
        def = static_cast<long>(*d);
      } else {
        type_error(name, *v, "integer");
      }
    }
    resolved_.set(name, static_cast<std::int64_t>(def));
    return def;
  }

  double get_double(const std::string& name, double def) {
    const Value* v = lookup(name);
    if (v != nullptr) {
      if (const auto* d = std::get_if<double>(v)) def = *d;
      else if (const auto* i = std::get_if<std::int64_t>(v)) def = static_cast<double>(*i);
      else type_error(name, *v, "number");
    }
    resolved_.set(name, def);
    return def;
  }

  bool get_bool(const std::string& name, bool def) {
    const Value* v = lookup(name);
    if (v != nullptr) {
      if (const auto* b = std::get_if<bool>(v)) def = *b;
      else type_error(name, *v, "bool");
    }
    resolved_.set(name, def);
    return def;
  }

  /// Rejects parameters the target never asked for.
  void finish() const {
    for (const Field& f : scenario_.params.fields) {
      if (!resolved_.has(f.name)) {
        fail(Errc::ConfigError, context() + ": unknown parameter \"" + f.name +
                                    "\" for target " +
                                    target_name(scenario_.target));
      }
    }
  }

  const Record& resolved() const { return resolved_; }

  std::uint64_t seed() const {
    if (!scenario_.seed) {
      fail(Errc::ConfigError,
           context() + ": target " + target_name(scenario_.target) +
               " is stochastic and needs an explicit seed");
    }
    return *scenario_.seed;
  }

 private:
  const Value* lookup(const std::string& name) {
    return scenario_.params.find(name);
  }

  [[noreturn]] void type_error(const std::string& name, const Value& v,
                               const char* want) const {
    fail(Errc::ConfigError, context() + ": parameter \"" + name + "\" must be " +
                                want + ", got " + value_type_name(v));
  }

  std::string context() const { return "scenario \"" + scenario_.name + "\""; }

  const Scenario& scenario_;
  Record resolved_;
};

// ---------------------------------------------------------------------------
// Shared parameter groups
// ---------------------------------------------------------------------------

Catalog resolve_catalog(Params& p) {
  const std::string preset = p.get_string("preset", "table1");
  const std::string embedded = p.get_string("catalog_json", "");
  if (!embedded.empty()) return load_catalog(embedded);
  return preset_catalog(preset);
}

MixtureSpec resolve_mixture(Params& p) {
  Catalog catalog = resolve_catalog(p);
  WarmupSchedule warmup;
  warmup.start_language_ratio = p.get_double("start", 1.0);
  warmup.target_language_ratio = p.get_double("target", 0.7);
  warmup.warmup_steps = p.get_int("warmup_steps", 2000);
  const std::string shape = p.get_string("shape", "linear");
  if (shape == "linear") {
    warmup.shape = WarmupShape::Linear;
  } else if (shape == "cosine") {
    warmup.shape = WarmupShape::Cosine;
  } else {
    fail(Errc::ConfigError,
         "parameter \"shape\" must be linear or cosine, got \"" + shape + "\"");
  }
  const double sft = p.get_double("sft_admixture", 0.0);
  return make_mixture_spec(std::move(catalog), warmup, sft);
}

std::vector<LayerProfile> resolve_profiles(Params& p, int stages, int tp) {
  const std::string model = p.get_string("model", "1B");
  const std::string costs = p.get_string("costs", "");
  const bool include_head = p.get_bool("include_head", false);
  if (!costs.empty()) {
    std::vector<LayerProfile> profiles;
    std::stringstream in(costs);
    std::string cell;
    while (std::getline(in, cell, ',')) {
      char* end = nullptr;
      const double c = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') {
        fail(Errc::ConfigError,
             "parameter \"costs\" must be comma-separated numbers, got \"" +
                 cell + "\"");
      }
      LayerProfile layer;
      layer.id = static_cast<int>(profiles.size());
      layer.kind = LayerKind::TransformerBlock;
      layer.compute_cost = c;
      profiles.push_back(layer);
    }
    if (profiles.empty())
      fail(Errc::ConfigError, "parameter \"costs\" must not be empty");
    return profiles;
  }
  Topology topo;
  topo.pp = stages;
  topo.tp = tp;
  CostOptions options;
  options.include_head = include_head;
  return preset_layer_profiles(model, topo, options);
}

// ---------------------------------------------------------------------------
// Target runners. Each reads all of its parameters first (so unknown-key
// detection sees the complete allowed set), then computes.
// ---------------------------------------------------------------------------

void run_mixture(Params& p, Report& report) {
  const MixtureSpec spec = resolve_mixture(p);
  const long step = p.get_int("step", 0);
  p.finish();

  report.record_fields = {"source", "modality", "probability"};
  const std::vector<SourceProbability> probs = mixture_at(spec, step);
  for (const SourceProbability& sp : probs) {
    Record r;
    r.set("source", sp.source);
    r.set("modality", std::string(modality_name(sp.modality)));
    r.set("probability", sp.probability);
    report.records.push_back(std::move(r));
  }
  report.summary.set("step", static_cast<std::int64_t>(step));
  report.summary.set("language_fraction",
                     language_fraction_at(spec.warmup, step));
  report.summary.set("sources", static_cast<std::int64_t>(probs.size()));
}

Record throughput_record(const ThroughputReport& t, const char* policy) {
  Record r;
  r.set("policy", std::string(policy));
  r.set("steps", static_cast<std::int64_t>(t.steps));
  r.set("samples", static_cast<std::int64_t>(t.samples));
  r.set("total_time", t.total_time);
  r.set("samples_per_second", t.samples_per_second);
  r.set("language_steps", static_cast<std::int64_t>(t.language_steps));
  r.set("multimodal_steps", static_cast<std::int64_t>(t.multimodal_steps));
  r.set("mixed_steps", static_cast<std::int64_t>(t.mixed_steps));
  return r;
}

void run_simulate_batching(Params& p, Report& report) {
  const MixtureSpec spec = resolve_mixture(p);
  const long steps = p.get_int("steps", 200);
  const long batch_size = p.get_int("batch_size", 16);
  const std::string policy = p.get_string("policy", "both");
  CostModel model;
  model.language_cost = p.get_double("language_cost", model.language_cost);
  model.multimodal_cost = p.get_double("multimodal_cost", model.multimodal_cost);
  model.jitter = p.get_double("jitter", model.jitter);
  const std::uint64_t seed = p.seed();
  if (policy != "both" && policy != "mixed" && policy != "grouped") {
    fail(Errc::ConfigError,
         "parameter \"policy\" must be mixed, grouped, or both, got \"" +
             policy + "\"");
  }
  p.finish();

  report.record_fields = {"policy",       "steps",
                          "samples",      "total_time",
                          "samples_per_second", "language_steps",
                          "multimodal_steps",   "mixed_steps"};
  if (policy == "both") {
    const PolicyComparison cmp = compare_policies(
        spec, steps, static_cast<int>(batch_size), model, seed);
    report.records.push_back(throughput_record(cmp.mixed, "mixed"));
    report.records.push_back(throughput_record(cmp.grouped, "grouped"));
    report.summary.set("speedup", cmp.speedup);
    report.summary.set("mixed_samples_per_second",
                       cmp.mixed.samples_per_second);
    report.summary.set("grouped_samples_per_second",
                       cmp.grouped.samples_per_second);
  } else {
    const BatchPolicy bp =
        policy == "mixed" ? BatchPolicy::Mixed : BatchPolicy::Grouped;
    const ThroughputReport t = simulate_run(
        spec, steps, static_cast<int>(batch_size), bp, model, seed);
    report.records.push_back(throughput_record(t, policy.c_str()));
    report.summary.set("samples_per_second", t.samples_per_second);
  }
}

void run_pack(Params& p, Report& report) {
  const MixtureSpec spec = resolve_mixture(p);
  const long step = p.get_int("step", spec.warmup.warmup_steps);
  const long samples = p.get_int("samples", 64);
  const long capacity = p.get_int("capacity", 4096);
  const std::uint64_t seed = p.seed();
  p.finish();

  const GlobalStepPlan plan =
      draw_step(spec, step, static_cast<int>(samples), BatchPolicy::Mixed, seed);
  const std::vector<SampleSpec>& drawn = plan.batches.at(0);
  const std::vector<PackedSequence> packed =
      pack_sequences(drawn, static_cast<int>(capacity));

  report.record_fields = {"sequence", "samples", "used", "capacity", "fill"};
  for (std::size_t i = 0; i < packed.size(); ++i) {
    Record r;
    r.set("sequence", static_cast<std::int64_t>(i));
    r.set("samples", static_cast<std::int64_t>(packed[i].sample_ids.size()));
    r.set("used", static_cast<std::int64_t>(packed[i].used));
    r.set("capacity", static_cast<std::int64_t>(packed[i].capacity));
    r.set("fill", static_cast<double>(packed[i].used) /
                      static_cast<double>(packed[i].capacity));
    report.records.push_back(std::move(r));
  }
  report.summary.set("step", static_cast<std::int64_t>(step));
  report.summary.set("samples", static_cast<std::int64_t>(drawn.size()));
  report.summary.set("sequences", static_cast<std::int64_t>(packed.size()));
  report.summary.set("efficiency", packing_efficiency(packed));
}

void run_partition(Params& p, Report& report) {
  const long stages = p.get_int("stages", 4);
  const long tp = p.get_int("tp", 1);
  const std::vector<LayerProfile> profiles =
      resolve_profiles(p, static_cast<int>(stages), static_cast<int>(tp));
  p.finish();

  const Partition part = partition_layers(profiles, static_cast<int>(stages));
  const Partition naive = naive_partition(profiles, static_cast<int>(stages));

  report.record_fields = {"stage", "begin", "end", "layers", "cost",
                          "param_bytes"};
  for (std::size_t i = 0; i < part.stages.size(); ++i) {
    const StageRange& s = part.stages[i];
    Record r;
    r.set("stage", static_cast<std::int64_t>(i));
    r.set("begin", static_cast<std::int64_t>(s.begin));
    r.set("end", static_cast<std::int64_t>(s.end));
    r.set("layers", static_cast<std::int64_t>(s.end - s.begin));
    r.set("cost", s.cost);
    r.set("param_bytes", s.param_bytes);
    report.records.push_back(std::move(r));
  }
  report.summary.set("layers", static_cast<std::int64_t>(profiles.size()));
  report.summary.set("bottleneck", part.bottleneck);
  report.summary.set("naive_bottleneck", naive.bottleneck);
}

void run_pipeline(Params& p, Report& report) {
  const long stages = p.get_int("stages", 4);
  const long tp = p.get_int("tp", 1);
  const std::vector<LayerProfile> profiles =
      resolve_profiles(p, static_cast<int>(stages), static_cast<int>(tp));
  const long microbatches = p.get_int("microbatches", 8);
  const std::string schedule = p.get_string("schedule", "both");
  PipelineOptions options;
  options.backward_ratio = p.get_double("backward_ratio", options.backward_ratio);
  options.comm_cost = p.get_double("comm_cost", options.comm_cost);
  options.overlap_comm = p.get_bool("overlap_comm", options.overlap_comm);
  if (schedule != "both" && schedule != "gpipe" && schedule != "1f1b") {
    fail(Errc::ConfigError,
         "parameter \"schedule\" must be gpipe, 1f1b, or both, got \"" +
             schedule + "\"");
  }
  p.finish();

  const Partition part = partition_layers(profiles, static_cast<int>(stages));
  Topology topo;
  topo.pp = static_cast<int>(stages);
  topo.tp = static_cast<int>(tp);
  topo.microbatches = static_cast<int>(microbatches);

  std::vector<PipeSchedule> selected;
  if (schedule != "1f1b") selected.push_back(PipeSchedule::GPipe);
  if (schedule != "gpipe") selected.push_back(PipeSchedule::OneFOneB);

  report.record_fields = {"schedule", "stage", "layers", "utilization",
                          "param_bytes"};
  for (PipeSchedule s : selected) {
    const PipelineReport pr = simulate_pipeline(part, topo, s, options);
    for (std::size_t i = 0; i < pr.stage_utilization.size(); ++i) {
      Record r;
      r.set("schedule", std::string(pipe_schedule_name(s)));
      r.set("stage", static_cast<std::int64_t>(i));
      r.set("layers", static_cast<std::int64_t>(part.stages[i].end -
                                                part.stages[i].begin));
      r.set("utilization", pr.stage_utilization[i]);
      r.set("param_bytes", pr.stage_param_bytes[i]);
      report.records.push_back(std::move(r));
    }
    const std::string prefix = pipe_schedule_name(s);
    report.summary.set(prefix + "_step_time", pr.step_time);
    report.summary.set(prefix + "_bubble", pr.bubble_fraction);
  }
  report.summary.set("stages", static_cast<std::int64_t>(stages));
  report.summary.set("microbatches", static_cast<std::int64_t>(microbatches));
  report.summary.set("bottleneck", part.bottleneck);
}

void run_shapes(Params& p, Report& report) {
  const std::string preset = p.get_string("preset", "paper");
  long image_size = 1024, patch = 16, channels = 256;
  long low_image_size = 384, low_patch = 16, low_emb = 1024;
  long interpolate_to = 96;
  std::string conv_channels = "512,1024";
  if (preset != "paper") {
    fail(Errc::ConfigError,
         "unknown shapes preset \"" + preset + "\" (expected paper)");
  }
  image_size = p.get_int("image_size", image_size);
  patch = p.get_int("patch", patch);
  channels = p.get_int("channels", channels);
  low_image_size = p.get_int("low_image_size", low_image_size);
  low_patch = p.get_int("low_patch", low_patch);
  low_emb = p.get_int("low_emb", low_emb);
  interpolate_to = p.get_int("interpolate_to", interpolate_to);
  conv_channels = p.get_string("conv_channels", conv_channels);
  const std::string concat = p.get_string("concat", "embedding");
  const std::string pool = p.get_string("pool", "w");
  p.finish();

  HighResNeckConfig neck;
  neck.interpolate_to = static_cast<int>(interpolate_to);
  {
    std::stringstream in(conv_channels);
    std::string cell;
    while (std::getline(in, cell, ',')) {
      char* end = nullptr;
      const long c = std::strtol(cell.c_str(), &end, 10);
      if (end == cell.c_str() || *end != '\0' || c < 1) {
        fail(Errc::ConfigError,
             "parameter \"conv_channels\" must be comma-separated positive "
             "integers, got \"" + cell + "\"");
      }
      neck.conv_channels.push_back(static_cast<int>(c));
    }
  }
  AdaptorConfig config;
  config.hidden_dim = 1;  // unused by shape-level fusion
  config.out_dim = 1;
  if (concat == "embedding") {
    config.concat_mode = ConcatMode::EmbeddingConcat;
  } else if (concat == "sequence") {
    config.concat_mode = ConcatMode::SequenceConcat;
    config.pool_axis = pool == "h" ? PoolAxis::H : PoolAxis::W;
  } else {
    fail(Errc::ConfigError,
         "parameter \"concat\" must be embedding or sequence, got \"" +
             concat + "\"");
  }

  const TensorShape high_in = highres_encoder_output(
      static_cast<int>(image_size), static_cast<int>(patch),
      static_cast<int>(channels));
  const std::vector<TensorShape> chain = sam_shape_chain(high_in, neck);
  const TensorShape low = lowres_encoder_output(static_cast<int>(low_image_size),
                                                static_cast<int>(low_patch),
                                                static_cast<int>(low_emb));
  const TensorShape fused = fuse_tokens(chain.back(), low, config);

  report.record_fields = {"step", "shape", "tokens"};
  auto add_row = [&report](const std::string& step, const TensorShape& shape) {
    Record r;
    r.set("step", step);
    r.set("shape", shape.str());
    if (shape.has(Axis::Seq))
      r.set("tokens", static_cast<std::int64_t>(shape.size(Axis::Seq)));
    report.records.push_back(std::move(r));
  };
  for (std::size_t i = 0; i < chain.size(); ++i) {
    std::string label;
    if (i == 0) {
      label = "high_encoder";
    } else if (i == 1 && neck.interpolate_to) {
      label = "interpolated";
    } else if (i + 1 == chain.size()) {
      label = "high_tokens";
    } else {
      const std::size_t first_conv = neck.interpolate_to ? 2 : 1;
      label = "conv_" + std::to_string(i - first_conv + 1);
    }
    add_row(label, chain[i]);
  }
  add_row("low_tokens", low);
  add_row("fused", fused);

  report.summary.set("fused_shape", fused.str());
  report.summary.set("fused_tokens",
                     static_cast<std::int64_t>(fused.size(Axis::Seq)));
  report.summary.set("fused_emb",
                     static_cast<std::int64_t>(fused.size(Axis::Emb)));
}

void run_adaptor_check(Params& p, Report& report) {
  const std::string variant = p.get_string("variant", "all");
  const std::string concat = p.get_string("concat", "both");
  const std::string pool = p.get_string("pool", "w");
  const long hidden = p.get_int("hidden_dim", 8);
  const long out = p.get_int("out_dim", 8);
  const long grid = p.get_int("grid", 2);
  const long emb_high = p.get_int("emb_high", 6);
  const long emb_low = p.get_int("emb_low", 6);
  const long seeds = p.get_int("seeds", 3);
  const double epsilon = p.get_double("epsilon", 1e-5);
  const double tolerance = p.get_double("tolerance", 1e-5);
  const std::uint64_t seed = p.seed();

  std::vector<MlpVariant> variants;
  if (variant == "all") {
    variants = {MlpVariant::Hybrid, MlpVariant::Shared, MlpVariant::Separate};
  } else if (variant == "hybrid") {
    variants = {MlpVariant::Hybrid};
  } else if (variant == "shared") {
    variants = {MlpVariant::Shared};
  } else if (variant == "separate") {
    variants = {MlpVariant::Separate};
  } else {
    fail(Errc::ConfigError,
         "parameter \"variant\" must be hybrid, shared, separate, or all, "
         "got \"" + variant + "\"");
  }
  std::vector<ConcatMode> modes;
  if (concat == "both") {
    modes = {ConcatMode::EmbeddingConcat, ConcatMode::SequenceConcat};
  } else if (concat == "embedding") {
    modes = {ConcatMode::EmbeddingConcat};
  } else if (concat == "sequence") {
    modes = {ConcatMode::SequenceConcat};
  } else {
    fail(Errc::ConfigError,
         "parameter \"concat\" must be embedding, sequence, or both, got \"" +
             concat + "\"");
  }
  if (seeds < 1) fail(Errc::ConfigError, "parameter \"seeds\" must be >= 1");
  p.finish();

  const int seq = static_cast<int>(grid * grid);
  report.record_fields = {"variant", "concat", "seeds", "coordinates",
                          "max_rel_error", "pass"};
  double worst = 0.0;
  bool all_pass = true;
  std::uint64_t stream = 0;
  for (MlpVariant v : variants) {
    for (ConcatMode m : modes) {
      AdaptorConfig config;
      config.mlp_variant = v;
      config.concat_mode = m;
      if (m == ConcatMode::SequenceConcat)
        config.pool_axis = pool == "h" ? PoolAxis::H : PoolAxis::W;
      config.hidden_dim = static_cast<int>(hidden);
      config.out_dim = static_cast<int>(out);

      double combo_worst = 0.0;
      long coordinates = 0;
      for (long s = 0; s < seeds; ++s) {
        const GradCheckResult result = gradient_check(
            config, seq, seq, static_cast<int>(emb_high),
            static_cast<int>(emb_low), derive_seed(seed, stream++), epsilon);
        combo_worst = std::max(combo_worst, result.max_rel_error);
        coordinates += result.coordinates_checked;
      }
      Record r;
      r.set("variant", std::string(mlp_variant_name(v)));
      r.set("concat", std::string(concat_mode_name(m)));
      r.set("seeds", static_cast<std::int64_t>(seeds));
      r.set("coordinates", static_cast<std::int64_t>(coordinates));
      r.set("max_rel_error", combo_worst);
      r.set("pass", combo_worst < tolerance);
      report.records.push_back(std::move(r));
      worst = std::max(worst, combo_worst);
      all_pass = all_pass && combo_worst < tolerance;
    }
  }
  report.summary.set("max_rel_error", worst);
  report.summary.set("tolerance", tolerance);
  report.summary.set("all_pass", all_pass);
}

void run_lr(Params& p, Report& report) {
  const std::string model = p.get_string("model", "");
  LRSchedule schedule;
  if (!model.empty()) {
    const long stage = p.get_int("stage", 2);
    if (stage < 1 || stage > 3) {
      fail(Errc::ConfigError,
           "parameter \"stage\" must be 1, 2, or 3, got " +
               std::to_string(stage));
    }
    schedule = stage_presets(parse_model_preset(model))
                   .at(static_cast<std::size_t>(stage - 1))
                   .lr;
  } else {
    const std::string kind = p.get_string("kind", "cosine");
    const double peak = p.get_double("peak", 1e-3);
    const long warmup = p.get_int("warmup_steps", 2000);
    const long total = p.get_int("total_steps", 10000);
    if (kind == "cosine") {
      schedule = cosine_schedule(peak, warmup, total,
                                 p.get_double("floor", 0.0));
    } else if (kind == "step") {
      std::vector<DecayPoint> points;
      const std::string decay = p.get_string("decay", "");
      if (decay.empty()) {
        points = default_decay_points();
      } else {
        std::stringstream in(decay);
        std::string cell;
        while (std::getline(in, cell, ',')) {
          const std::size_t colon = cell.find(':');
          if (colon == std::string::npos) {
            fail(Errc::ConfigError,
                 "parameter \"decay\" must be fraction:multiplier pairs, "
                 "got \"" + cell + "\"");
          }
          char* end = nullptr;
          DecayPoint point;
          point.fraction = std::strtod(cell.c_str(), &end);
          if (end != cell.c_str() + colon)
            fail(Errc::ConfigError,
                 "parameter \"decay\": bad fraction in \"" + cell + "\"");
          point.multiplier = std::strtod(cell.c_str() + colon + 1, &end);
          if (*end != '\0')
            fail(Errc::ConfigError,
                 "parameter \"decay\": bad multiplier in \"" + cell + "\"");
          points.push_back(point);
        }
      }
      schedule = step_schedule(peak, warmup, total, std::move(points));
    } else {
      fail(Errc::ConfigError,
           "parameter \"kind\" must be cosine or step, got \"" + kind + "\"");
    }
  }
  const long samples = p.get_int("samples", 101);
  const long single_step = p.get_int("step", -1);  // >= 0: one row at this step
  if (samples < 1) fail(Errc::ConfigError, "parameter \"samples\" must be >= 1");
  p.finish();

  report.record_fields = {"step", "lr"};
  if (single_step >= 0) {
    Record r;
    r.set("step", static_cast<std::int64_t>(single_step));
    r.set("lr", lr_at(schedule, single_step));
    report.records.push_back(std::move(r));
  } else {
    long previous = -1;
    for (long i = 0; i < samples; ++i) {
      const long step =
          samples == 1 ? 0
                       : std::lround(static_cast<double>(i) *
                                     static_cast<double>(schedule.total_steps) /
                                     static_cast<double>(samples - 1));
      if (step == previous) continue;
      previous = step;
      Record r;
      r.set("step", static_cast<std::int64_t>(step));
      r.set("lr", lr_at(schedule, step));
      report.records.push_back(std::move(r));
    }
  }
  report.summary.set("kind", std::string(lr_kind_name(schedule.kind)));
  report.summary.set("peak", schedule.peak);
  report.summary.set("warmup_steps",
                     static_cast<std::int64_t>(schedule.warmup_steps));
  report.summary.set("total_steps",
                     static_cast<std::int64_t>(schedule.total_steps));
  report.summary.set("lr_at_warmup_end",
                     lr_at(schedule, schedule.warmup_steps));
}

std::vector<ChoiceInstance> parse_choice_jsonl(const std::string& text) {
  std::vector<ChoiceInstance> instances;
  std::stringstream in(text);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where =
        "input_jsonl line " + std::to_string(line_no);
    const json obj = detail::parse_json(line, where.c_str());
    detail::check_keys(obj, {"prompt_id", "options"}, {}, where.c_str());
    ChoiceInstance instance;
    instance.prompt_id = detail::as_string(obj["prompt_id"], where.c_str());
    if (!obj["options"].is_array())
      fail(Errc::ConfigError, where + ": \"options\" must be an array");
    for (const json& opt : obj["options"]) {
      detail::check_keys(opt, {"label", "logprobs"}, {}, where.c_str());
      ChoiceInstance::Option option;
      option.label = detail::as_string(opt["label"], where.c_str());
      if (!opt["logprobs"].is_array())
        fail(Errc::ConfigError, where + ": \"logprobs\" must be an array");
      int token_id = 0;
      for (const json& lp : opt["logprobs"]) {
        TokenLogProb tok;
        tok.token_id = token_id++;
        tok.logprob = detail::as_number(lp, where.c_str());
        option.tokens.push_back(tok);
      }
      instance.options.push_back(std::move(option));
    }
    instances.push_back(std::move(instance));
  }
  return instances;
}

void run_eval(Params& p, Report& report) {
  const std::string input = p.get_string("input_jsonl", "");
  const std::string scoring_name = p.get_string("scoring", "ppl");
  ChoiceScoring scoring;
  if (scoring_name == "ppl") {
    scoring = ChoiceScoring::MeanPerplexity;
  } else if (scoring_name == "nll") {
    scoring = ChoiceScoring::TotalNll;
  } else {
    fail(Errc::ConfigError,
         "parameter \"scoring\" must be ppl or nll, got \"" + scoring_name +
             "\"");
  }
  std::vector<ChoiceInstance> instances;
  if (input.empty()) {
    const long n = p.get_int("instances", 100);
    const long options = p.get_int("options", 4);
    const long max_tokens = p.get_int("max_tokens", 12);
    const std::uint64_t seed = p.seed();
    if (n < 1) fail(Errc::ConfigError, "parameter \"instances\" must be >= 1");
    p.finish();
    instances.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
      instances.push_back(random_choice_instance(
          derive_seed(seed, static_cast<std::uint64_t>(i)),
          static_cast<int>(options), static_cast<int>(max_tokens)));
    }
  } else {
    p.finish();
    instances = parse_choice_jsonl(input);
  }

  report.record_fields = {"prompt_id", "options", "selected", "best_ppl"};
  double ppl_sum = 0.0;
  for (const ChoiceInstance& instance : instances) {
    const std::string selected = select_choice_ppl(instance, scoring);
    double best_ppl = 0.0;
    for (const auto& option : instance.options) {
      if (option.label == selected) {
        best_ppl = perplexity(option.tokens);
        break;
      }
    }
    ppl_sum += best_ppl;
    Record r;
    r.set("prompt_id", instance.prompt_id);
    r.set("options", static_cast<std::int64_t>(instance.options.size()));
    r.set("selected", selected);
    r.set("best_ppl", best_ppl);
    report.records.push_back(std::move(r));
  }
  report.summary.set("instances",
                     static_cast<std::int64_t>(instances.size()));
  report.summary.set("scoring", scoring_name);
  report.summary.set("mean_selected_ppl",
                     instances.empty()
                         ? 0.0
                         : ppl_sum / static_cast<double>(instances.size()));
}

// ---------------------------------------------------------------------------
// JSON plumbing
// ---------------------------------------------------------------------------

json value_to_json(const Value& v) {
  switch (v.index()) {
    case 0:
      return std::get<bool>(v);
    case 1:
      return std::get<std::int64_t>(v);
    case 2:
      return std::get<double>(v);
    default:
      return std::get<std::string>(v);
  }
}

Value value_from_json(const json& v, const char* where) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer() || v.is_number_unsigned())
    return static_cast<std::int64_t>(v.get<std::int64_t>());
  if (v.is_number_float()) return v.get<double>();
  if (v.is_string()) return v.get<std::string>();
  fail(Errc::ConfigError,
       std::string(where) + ": values must be scalars (bool, number, string)");
}

json record_to_json(const Record& record) {
  json obj = json::object();
  for (const Field& f : record.fields) obj[f.name] = value_to_json(f.value);
  return obj;
}

Record record_from_json(const json& obj, const char* where) {
  if (!obj.is_object())
    fail(Errc::ConfigError, std::string(where) + ": expected a JSON object");
  Record record;
  for (auto it = obj.begin(); it != obj.end(); ++it)
    record.set(it.key(), value_from_json(it.value(), where));
  return record;
}

json scenario_to_json_obj(const Scenario& scenario) {
  json obj = json::object();
  obj["version"] = 1;
  obj["name"] = scenario.name;
  obj["target"] = target_name(scenario.target);
  if (scenario.seed) obj["seed"] = *scenario.seed;
  obj["format"] = report_format_name(scenario.format);
  obj["params"] = record_to_json(scenario.params);
  return obj;
}

Scenario scenario_from_json_obj(const json& obj, const char* where) {
  detail::check_keys(obj, {"version", "name", "target"},
                     {"seed", "format", "params"}, where);
  detail::check_version(obj, 1, where);
  Scenario scenario;
  scenario.name = detail::as_string(obj["name"], where);
  if (scenario.name.empty())
    fail(Errc::ConfigError, std::string(where) + ": \"name\" must not be empty");
  scenario.target = parse_target(detail::as_string(obj["target"], where));
  if (obj.contains("seed")) {
    const json& s = obj["seed"];
    if (s.is_number_unsigned()) {
      scenario.seed = s.get<std::uint64_t>();
    } else if (s.is_number_integer() && s.get<std::int64_t>() >= 0) {
      scenario.seed = static_cast<std::uint64_t>(s.get<std::int64_t>());
    } else {
      fail(Errc::ConfigError,
           std::string(where) + ": \"seed\" must be a nonnegative integer");
    }
  }
  if (obj.contains("format"))
    scenario.format =
        parse_report_format(detail::as_string(obj["format"], where));
  if (obj.contains("params"))
    scenario.params = record_from_json(obj["params"], where);
  return scenario;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

std::string csv_cell(const Value& v) {
  std::string text;
  switch (v.index()) {
    case 0:
      return std::get<bool>(v) ? "true" : "false";
    case 1:
      return std::to_string(std::get<std::int64_t>(v));
    case 2:
      return json(std::get<double>(v)).dump();  // shortest round-trip form
    default:
      text = std::get<std::string>(v);
  }
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string quoted = "\"";
  for (char c : text) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

std::string table_cell(const Value& v) {
  switch (v.index()) {
    case 0:
      return std::get<bool>(v) ? "true" : "false";
    case 1:
      return std::to_string(std::get<std::int64_t>(v));
    case 2:
      return detail::fmt_double(std::get<double>(v));
    default:
      return std::get<std::string>(v);
  }
}

std::string emit_json_lines(const Report& report) {
  std::string out;
  json header = json::object();
  header["schema_version"] = report.schema_version;
  header["kind"] = "vlplan-report";
  header["scenario"] = scenario_to_json_obj(report.scenario);
  header["record_fields"] = report.record_fields;
  out += header.dump();
  out += '\n';
  for (const Record& record : report.records) {
    json line = json::object();
    line["record"] = record_to_json(record);
    out += line.dump();
    out += '\n';
  }
  json tail = json::object();
  tail["summary"] = record_to_json(report.summary);
  out += tail.dump();
  out += '\n';
  return out;
}

std::string emit_csv(const Report& report) {
  std::string out;
  for (std::size_t i = 0; i < report.record_fields.size(); ++i) {
    if (i > 0) out += ',';
    out += csv_cell(report.record_fields[i]);
  }
  out += '\n';
  for (const Record& record : report.records) {
    for (std::size_t i = 0; i < report.record_fields.size(); ++i) {
      if (i > 0) out += ',';
      const Value* v = record.find(report.record_fields[i]);
      if (v != nullptr) out += csv_cell(*v);
    }
    out += '\n';
  }
  return out;
}

std::string emit_pretty_table(const Report& report) {
  std::string out;
  out += "scenario  " + report.scenario.name + "\n";
  out += "target    " + std::string(target_name(report.scenario.target)) + "\n";
  if (report.scenario.seed)
    out += "seed      " + std::to_string(*report.scenario.seed) + "\n";
  out += '\n';

  const std::size_t n_cols = report.record_fields.size();
  std::vector<std::size_t> widths(n_cols);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < n_cols; ++i)
    widths[i] = report.record_fields[i].size();
  for (const Record& record : report.records) {
    std::vector<std::string> row(n_cols);
    for (std::size_t i = 0; i < n_cols; ++i) {
      const Value* v = record.find(report.record_fields[i]);
      row[i] = v != nullptr ? table_cell(*v) : "-";
      widths[i] = std::max(widths[i], row[i].size());
    }
    rows.push_back(std::move(row));
  }
  auto pad = [](const std::string& s, std::size_t w) {
    return s + std::string(w - s.size(), ' ');
  };
  for (std::size_t i = 0; i < n_cols; ++i) {
    if (i > 0) out += "  ";
    out += pad(report.record_fields[i], widths[i]);
  }
  out += '\n';
  for (std::size_t i = 0; i < n_cols; ++i) {
    if (i > 0) out += "  ";
    out += std::string(widths[i], '-');
  }
  out += '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < n_cols; ++i) {
      if (i > 0) out += "  ";
      out += pad(row[i], widths[i]);
    }
    out += '\n';
  }
  out += '\n';
  for (const Field& f : report.summary.fields)
    out += f.name + " = " + table_cell(f.value) + "\n";
  return out;
}

}  // namespace

Report run_scenario(const Scenario& scenario) {
  if (scenario.name.empty())
    fail(Errc::ConfigError, "scenario name must not be empty");
  Report report;
  report.scenario = scenario;
  Params params(scenario);
  try {
    switch (scenario.target) {
      case Target::Mixture:
        run_mixture(params, report);
        break;
      case Target::SimulateBatching:
        run_simulate_batching(params, report);
        break;
      case Target::Pack:
        run_pack(params, report);
        break;
      case Target::Partition:
        run_partition(params, report);
        break;
      case Target::Pipeline:
        run_pipeline(params, report);
        break;
      case Target::Shapes:
        run_shapes(params, report);
        break;
      case Target::AdaptorCheck:
        run_adaptor_check(params, report);
        break;
      case Target::Lr:
        run_lr(params, report);
        break;
      case Target::Eval:
        run_eval(params, report);
        break;
    }
  } catch (const Error& e) {
    if (e.code() == Errc::ConfigError || e.code() == Errc::UnsupportedFormat)
      throw;
    fail(Errc::ModuleError, "scenario \"" + scenario.name + "\" (" +
                                target_name(scenario.target) +
                                "): " + e.what());
  }
  report.scenario.params = params.resolved();
  return report;
}

std::string emit_report(const Report& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::JsonLines:
      return emit_json_lines(report);
    case ReportFormat::Csv:
      return emit_csv(report);
    case ReportFormat::PrettyTable:
      return emit_pretty_table(report);
  }
  fail(Errc::UnsupportedFormat, "unknown report format");
}

Scenario scenario_from_json(const std::string& text) {
  const json doc = detail::parse_json(text, "scenario config");
  return scenario_from_json_obj(doc, "scenario config");
}

std::string scenario_to_json(const Scenario& scenario) {
  return scenario_to_json_obj(scenario).dump(2) + "\n";
}

Report parse_report_jsonl(const std::string& text) {
  std::stringstream in(text);
  std::string line;
  Report report;
  bool have_header = false;
  bool have_summary = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json obj = detail::parse_json(line, "report line");
    if (!have_header) {
      detail::check_keys(obj, {"schema_version", "kind", "scenario",
                               "record_fields"},
                         {}, "report header");
      if (!obj["schema_version"].is_number_integer())
        fail(Errc::ConfigError, "report header: bad schema_version");
      report.schema_version = obj["schema_version"].get<int>();
      if (detail::as_string(obj["kind"], "report header") != "vlplan-report")
        fail(Errc::ConfigError, "report header: not a vlplan report");
      report.scenario =
          scenario_from_json_obj(obj["scenario"], "report scenario");
      if (!obj["record_fields"].is_array())
        fail(Errc::ConfigError, "report header: bad record_fields");
      for (const json& f : obj["record_fields"])
        report.record_fields.push_back(
            detail::as_string(f, "report record_fields"));
      have_header = true;
    } else if (obj.contains("record")) {
      detail::check_keys(obj, {"record"}, {}, "report record line");
      report.records.push_back(
          record_from_json(obj["record"], "report record"));
    } else {
      detail::check_keys(obj, {"summary"}, {}, "report summary line");
      if (have_summary)
        fail(Errc::ConfigError, "report has more than one summary line");
      report.summary = record_from_json(obj["summary"], "report summary");
      have_summary = true;
    }
  }
  if (!have_header) fail(Errc::ConfigError, "report is empty");
  if (!have_summary) fail(Errc::ConfigError, "report has no summary line");
  return report;
}

std::vector<Report> run_sweep(const std::string& config_text) {
  const json doc = detail::parse_json(config_text, "sweep config");
  detail::check_keys(doc, {"version", "scenarios"}, {}, "sweep config");
  detail::check_version(doc, 1, "sweep config");
  if (!doc["scenarios"].is_array())
    fail(Errc::ConfigError, "sweep config: \"scenarios\" must be an array");
  std::vector<Scenario> scenarios;
  for (const json& s : doc["scenarios"])
    scenarios.push_back(scenario_from_json_obj(s, "sweep scenario"));
  std::sort(scenarios.begin(), scenarios.end(),
            [](const Scenario& a, const Scenario& b) { return a.name < b.name; });
  for (std::size_t i = 1; i < scenarios.size(); ++i) {
    if (scenarios[i].name == scenarios[i - 1].name) {
      fail(Errc::ConfigError,
           "sweep config: duplicate scenario name \"" + scenarios[i].name +
               "\"");
    }
  }
  std::vector<Report> reports;
  reports.reserve(scenarios.size());
  for (const Scenario& s : scenarios) reports.push_back(run_scenario(s));
  return reports;
}

}  // namespace vlplan
