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
#include <string_view>
#include <vector>

#include "vlplan/error.hpp"
#include "vlplan/record.hpp"

namespace vlplan {

/// Which planning operation a scenario exercises. One target maps to one CLI
/// subcommand of the same (kebab-case) name.
enum class Target {
  Mixture,
  SimulateBatching,
  Pack,
  Partition,
  Pipeline,
  Shapes,
  AdaptorCheck,
  Lr,
  Eval,
};

const char* target_name(Target t) noexcept;
Target parse_target(std::string_view name);

enum class ReportFormat { JsonLines, Csv, PrettyTable };

const char* report_format_name(ReportFormat f) noexcept;
ReportFormat parse_report_format(std::string_view name);

/// A named, fully-specified experiment. `params` holds flat target-specific
/// parameters; unknown parameter names are rejected at run time so config
/// typos fail loudly instead of silently using defaults.
///
/// Seeds are explicit (never wall clock). Targets that draw random numbers
/// (simulate-batching, pack, adaptor-check, and eval without embedded input)
/// require one.
struct Scenario {
  std::string name;
  Target target = Target::Mixture;
  std::optional<std::uint64_t> seed;
  ReportFormat format = ReportFormat::JsonLines;
  Record params;
};

/// A scenario's output: rows plus summary metrics, carrying the full
/// resolved scenario (every parameter with defaults applied) so any report
/// can be reproduced from its own header alone.
///
/// `record_fields` declares the row schema explicitly — it is the CSV
/// header even when `records` is empty.
struct Report {
  int schema_version = 1;
  Scenario scenario;
  std::vector<std::string> record_fields;
  std::vector<Record> records;
  Record summary;
};

bool operator==(const Scenario& a, const Scenario& b);
bool operator==(const Report& a, const Report& b);

/// Validates and executes a scenario. Parameter problems (unknown names,
/// bad values, missing seed) are ConfigError; failures raised by the target
/// module are rethrown as ModuleError prefixed with the scenario name.
/// Identical scenario + seed always produce an identical Report.
Report run_scenario(const Scenario& scenario);

/// Renders a report. json-lines is lossless (header line, one line per
/// record, summary line); csv flattens records under the declared header;
/// pretty-table is for humans. Output is deterministic byte-for-byte.
std::string emit_report(const Report& report, ReportFormat format);

/// Parses the versioned scenario config schema:
///   {"version": 1, "name": ..., "target": ..., "seed": ...,
///    "format": ..., "params": {...}}
/// Unknown keys anywhere are ConfigError.
Scenario scenario_from_json(const std::string& text);
std::string scenario_to_json(const Scenario& scenario);

/// Inverse of emit_report(..., JsonLines); used by round-trip tests.
Report parse_report_jsonl(const std::string& text);

/// Parses a sweep config {"version": 1, "scenarios": [...]}, runs every
/// scenario, and returns the reports sorted by scenario name (the
/// deterministic merge order). Duplicate names are ConfigError.
std::vector<Report> run_sweep(const std::string& config_text);

}  // namespace vlplan
