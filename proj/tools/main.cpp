/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

// vlplan — scenario runner for the planning library. One subcommand per
// scenario target plus `sweep`. Scenarios come from --config files and/or
// command-line flags; flags override config values. Reports go to stdout or,
// with --out, to a file (relative --out paths land under $VLPLAN_OUT_DIR
// when that is set). Errors are structured JSON on stderr with a nonzero
// exit code.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vlplan/error.hpp"
#include "vlplan/record.hpp"
#include "vlplan/scenario.hpp"

namespace {

using vlplan::Errc;
using vlplan::Error;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) vlplan::fail(Errc::ConfigError, "cannot read file \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Interprets a command-line parameter value: bool / integer / real literals
/// become typed values, anything else stays a string.
vlplan::Value parse_value(const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  if (!text.empty()) {
    char* end = nullptr;
    const long long i = std::strtoll(text.c_str(), &end, 10);
    if (end == text.c_str() + text.size()) return static_cast<std::int64_t>(i);
    const double d = std::strtod(text.c_str(), &end);
    if (end == text.c_str() + text.size()) return d;
  }
  return text;
}

/// Resolves --out against $VLPLAN_OUT_DIR (relative paths only) and writes
/// the report body; an empty path means stdout.
void write_output(const std::string& out, const std::string& body) {
  if (out.empty()) {
    std::cout << body;
    return;
  }
  std::filesystem::path path(out);
  if (path.is_relative()) {
    if (const char* dir = std::getenv("VLPLAN_OUT_DIR"); dir != nullptr && *dir != '\0') {
      path = std::filesystem::path(dir) / path;
    }
  }
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) {
    vlplan::fail(Errc::ConfigError,
                 "cannot write file \"" + path.string() + "\"");
  }
  file << body;
  if (!file.good()) {
    vlplan::fail(Errc::ConfigError, "write to \"" + path.string() + "\" failed");
  }
}

/// Per-subcommand option state. Typed convenience flags cover the common
/// parameters; --param key=value reaches everything else.
struct SubCommand {
  vlplan::Target target = vlplan::Target::Mixture;
  CLI::App* cmd = nullptr;
  std::string config_path;
  std::string preset;
  std::uint64_t seed = 0;
  std::string format;
  std::string out;
  std::vector<std::string> params;   // raw key=value pairs
  std::string input_path;            // eval only: file whose text is embedded

  // Typed convenience flags (applied only when the flag was given).
  long step = 0;
  long steps = 0;
  long batch_size = 0;
  long capacity = 0;
  long samples = 0;
  long stages = 0;
  long tp = 0;
  long microbatches = 0;
  long stage = 0;
  long seeds = 0;
  long instances = 0;
  std::string policy, model, schedule, variant, concat, kind, scoring_mode;
};

void add_common_flags(SubCommand& sub) {
  sub.cmd->add_option("--config", sub.config_path,
                      "Scenario config file (JSON, version 1)");
  sub.cmd->add_option("--preset", sub.preset,
                      "Preset name (catalogs: table1, table2; shapes: paper; "
                      "models: 1B, 7B)");
  sub.cmd->add_option("--seed", sub.seed, "RNG seed (required for stochastic targets)");
  sub.cmd->add_option("--format", sub.format,
                      "Output format: json-lines, csv, pretty-table");
  sub.cmd->add_option("--out", sub.out,
                      "Output file (default stdout; relative paths join "
                      "$VLPLAN_OUT_DIR when set)");
  sub.cmd->add_option("--param", sub.params,
                      "Extra scenario parameter as key=value (repeatable)");
}

/// True iff the subcommand defines `flag` and the user passed it.
bool flag_given(const SubCommand& sub, const char* flag) {
  const CLI::Option* opt = sub.cmd->get_option_no_throw(flag);
  return opt != nullptr && opt->count() > 0;
}

/// Applies a typed flag into scenario params iff the user passed it.
template <typename T>
void apply_flag(const SubCommand& sub, const char* flag, const char* param,
                const T& value, vlplan::Scenario& scenario) {
  if (flag_given(sub, flag)) scenario.params.set(param, value);
}

vlplan::Scenario build_scenario(const SubCommand& sub) {
  vlplan::Scenario scenario;
  if (!sub.config_path.empty()) {
    scenario = vlplan::scenario_from_json(slurp(sub.config_path));
    if (scenario.target != sub.target) {
      vlplan::fail(Errc::ConfigError,
                   std::string("config target \"") +
                       vlplan::target_name(scenario.target) +
                       "\" does not match subcommand \"" +
                       vlplan::target_name(sub.target) + "\"");
    }
  } else {
    scenario.name = vlplan::target_name(sub.target);
    scenario.target = sub.target;
  }
  if (flag_given(sub, "--seed")) scenario.seed = sub.seed;
  if (flag_given(sub, "--format"))
    scenario.format = vlplan::parse_report_format(sub.format);
  if (flag_given(sub, "--preset")) {
    // For model-centric targets --preset is the model preset; elsewhere it
    // is the catalog/shape preset. Both live in params under the name the
    // target reads.
    const bool model_preset = sub.target == vlplan::Target::Partition ||
                              sub.target == vlplan::Target::Pipeline ||
                              sub.target == vlplan::Target::Lr;
    scenario.params.set(model_preset ? "model" : "preset", sub.preset);
  }

  apply_flag(sub, "--step", "step", static_cast<std::int64_t>(sub.step), scenario);
  apply_flag(sub, "--steps", "steps", static_cast<std::int64_t>(sub.steps), scenario);
  apply_flag(sub, "--batch-size", "batch_size",
             static_cast<std::int64_t>(sub.batch_size), scenario);
  apply_flag(sub, "--capacity", "capacity",
             static_cast<std::int64_t>(sub.capacity), scenario);
  apply_flag(sub, "--samples", "samples",
             static_cast<std::int64_t>(sub.samples), scenario);
  apply_flag(sub, "--stages", "stages", static_cast<std::int64_t>(sub.stages),
             scenario);
  apply_flag(sub, "--tp", "tp", static_cast<std::int64_t>(sub.tp), scenario);
  apply_flag(sub, "--microbatches", "microbatches",
             static_cast<std::int64_t>(sub.microbatches), scenario);
  apply_flag(sub, "--stage", "stage", static_cast<std::int64_t>(sub.stage),
             scenario);
  apply_flag(sub, "--seeds", "seeds", static_cast<std::int64_t>(sub.seeds),
             scenario);
  apply_flag(sub, "--instances", "instances",
             static_cast<std::int64_t>(sub.instances), scenario);
  apply_flag(sub, "--policy", "policy", sub.policy, scenario);
  apply_flag(sub, "--model", "model", sub.model, scenario);
  apply_flag(sub, "--schedule", "schedule", sub.schedule, scenario);
  apply_flag(sub, "--variant", "variant", sub.variant, scenario);
  apply_flag(sub, "--concat", "concat", sub.concat, scenario);
  apply_flag(sub, "--kind", "kind", sub.kind, scenario);
  apply_flag(sub, "--scoring", "scoring", sub.scoring_mode, scenario);
  if (flag_given(sub, "--input"))
    scenario.params.set("input_jsonl", slurp(sub.input_path));

  for (const std::string& kv : sub.params) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      vlplan::fail(Errc::ConfigError,
                   "--param expects key=value, got \"" + kv + "\"");
    }
    scenario.params.set(kv.substr(0, eq), parse_value(kv.substr(eq + 1)));
  }
  return scenario;
}

int run_one(const SubCommand& sub) {
  const vlplan::Scenario scenario = build_scenario(sub);
  const vlplan::Report report = vlplan::run_scenario(scenario);
  write_output(sub.out, vlplan::emit_report(report, report.scenario.format));
  return 0;
}

int run_sweep_cmd(const SubCommand& sub) {
  if (sub.config_path.empty())
    vlplan::fail(Errc::ConfigError, "sweep needs --config");
  const std::vector<vlplan::Report> reports =
      vlplan::run_sweep(slurp(sub.config_path));
  std::string body;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    vlplan::ReportFormat format = reports[i].scenario.format;
    if (flag_given(sub, "--format"))
      format = vlplan::parse_report_format(sub.format);
    if (i > 0 && format != vlplan::ReportFormat::JsonLines) body += '\n';
    body += vlplan::emit_report(reports[i], format);
  }
  write_output(sub.out, body);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "vlplan — planning and simulation toolkit for multimodal LLM "
      "pretraining pipelines"};
  app.require_subcommand(1);

  std::vector<SubCommand> subs(9);
  const vlplan::Target targets[] = {
      vlplan::Target::Mixture,      vlplan::Target::SimulateBatching,
      vlplan::Target::Pack,         vlplan::Target::Partition,
      vlplan::Target::Pipeline,     vlplan::Target::Shapes,
      vlplan::Target::AdaptorCheck, vlplan::Target::Lr,
      vlplan::Target::Eval,
  };
  const char* descriptions[] = {
      "Per-source sampling probabilities at a training step",
      "Straggler-model throughput of mixed vs modality-grouped batching",
      "First-fit sequence packing of one drawn batch",
      "Min-max contiguous layer partition vs the naive equal split",
      "GPipe / 1F1B pipeline schedule simulation",
      "Hybrid-encoder shape chain and token fusion",
      "Finite-difference gradient check of the adaptor MLP variants",
      "Learning-rate schedule table",
      "Multi-choice perplexity selection over toy or embedded instances",
  };
  for (std::size_t i = 0; i < subs.size(); ++i) {
    subs[i].target = targets[i];
    subs[i].cmd = app.add_subcommand(vlplan::target_name(targets[i]),
                                     descriptions[i]);
    add_common_flags(subs[i]);
  }

  auto by_name = [&subs](vlplan::Target t) -> SubCommand& {
    for (SubCommand& s : subs)
      if (s.target == t) return s;
    return subs[0];
  };
  {
    SubCommand& s = by_name(vlplan::Target::Mixture);
    s.cmd->add_option("--step", s.step, "Global training step");
  }
  {
    SubCommand& s = by_name(vlplan::Target::SimulateBatching);
    s.cmd->add_option("--policy", s.policy, "mixed, grouped, or both");
    s.cmd->add_option("--steps", s.steps, "Global steps to simulate");
    s.cmd->add_option("--batch-size", s.batch_size, "Samples per batch");
  }
  {
    SubCommand& s = by_name(vlplan::Target::Pack);
    s.cmd->add_option("--capacity", s.capacity, "Token capacity per sequence");
    s.cmd->add_option("--samples", s.samples, "Samples to draw");
    s.cmd->add_option("--step", s.step, "Step whose mixture is drawn from");
  }
  {
    SubCommand& s = by_name(vlplan::Target::Partition);
    s.cmd->add_option("--model", s.model, "Model preset (1B or 7B)");
    s.cmd->add_option("--stages", s.stages, "Pipeline stages");
    s.cmd->add_option("--tp", s.tp, "Tensor-parallel ranks");
  }
  {
    SubCommand& s = by_name(vlplan::Target::Pipeline);
    s.cmd->add_option("--model", s.model, "Model preset (1B or 7B)");
    s.cmd->add_option("--stages", s.stages, "Pipeline stages");
    s.cmd->add_option("--tp", s.tp, "Tensor-parallel ranks");
    s.cmd->add_option("--microbatches", s.microbatches, "Microbatches per step");
    s.cmd->add_option("--schedule", s.schedule, "gpipe, 1f1b, or both");
  }
  {
    SubCommand& s = by_name(vlplan::Target::Shapes);
    s.cmd->add_option("--concat", s.concat, "embedding or sequence");
  }
  {
    SubCommand& s = by_name(vlplan::Target::AdaptorCheck);
    s.cmd->add_option("--variant", s.variant, "hybrid, shared, separate, or all");
    s.cmd->add_option("--concat", s.concat, "embedding, sequence, or both");
    s.cmd->add_option("--seeds", s.seeds, "Seeds per variant/concat combination");
  }
  {
    SubCommand& s = by_name(vlplan::Target::Lr);
    s.cmd->add_option("--model", s.model, "Use a stage preset: vl1b or vl7b");
    s.cmd->add_option("--stage", s.stage, "Preset stage (1-3)");
    s.cmd->add_option("--kind", s.kind, "cosine or step (explicit schedules)");
    s.cmd->add_option("--step", s.step, "Evaluate the schedule at one step only");
  }
  {
    SubCommand& s = by_name(vlplan::Target::Eval);
    s.cmd->add_option("--input", s.input_path,
                      "JSONL file of choice instances (embedded into the "
                      "scenario)");
    s.cmd->add_option("--instances", s.instances, "Toy instances to generate");
    s.cmd->add_option("--scoring", s.scoring_mode, "ppl or nll");
  }

  SubCommand sweep;
  sweep.cmd = app.add_subcommand(
      "sweep", "Run every scenario in a config and merge reports by name");
  sweep.cmd->add_option("--config", sweep.config_path,
                        "Sweep config file {\"version\":1,\"scenarios\":[...]}")
      ->required();
  sweep.cmd->add_option("--format", sweep.format,
                        "Force one output format for every report");
  sweep.cmd->add_option("--out", sweep.out, "Output file (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sweep.cmd->parsed()) return run_sweep_cmd(sweep);
    for (const SubCommand& sub : subs)
      if (sub.cmd->parsed()) return run_one(sub);
    return 0;
  } catch (const Error& e) {
    std::cerr << "{\"error\":{\"code\":\"" << vlplan::errc_name(e.code())
              << "\",\"message\":" << nlohmann::json(e.what()).dump()
              << "}}\n";
    return e.code() == Errc::ModuleError ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "{\"error\":{\"code\":\"internal\",\"message\":"
              << nlohmann::json(e.what()).dump() << "}}\n";
    return 4;
  }
}
