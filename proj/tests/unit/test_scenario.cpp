/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include "vlplan/scenario.hpp"

#include <doctest.h>

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "test_support.hpp"

using namespace vlplan;

namespace {

Scenario make(const std::string& name, Target target) {
  Scenario s;
  s.name = name;
  s.target = target;
  return s;
}

double get_d(const Record& r, const std::string& key) {
  const Value* v = r.find(key);
  REQUIRE(v != nullptr);
  return std::get<double>(*v);
}

std::int64_t get_i(const Record& r, const std::string& key) {
  const Value* v = r.find(key);
  REQUIRE(v != nullptr);
  return std::get<std::int64_t>(*v);
}

std::string get_s(const Record& r, const std::string& key) {
  const Value* v = r.find(key);
  REQUIRE(v != nullptr);
  return std::get<std::string>(*v);
}

}  // namespace

TEST_CASE("scenario: mixture probabilities at the start of warmup") {
  Scenario s = make("warmup-start", Target::Mixture);
  s.params.set("step", std::int64_t{0});
  const Report report = run_scenario(s);

  CHECK(report.record_fields ==
        std::vector<std::string>{"source", "modality", "probability"});
  CHECK(get_d(report.summary, "language_fraction") == 1.0);
  double sum = 0.0;
  for (const Record& r : report.records) {
    const double prob = get_d(r, "probability");
    sum += prob;
    if (get_s(r, "source") == "text_only") {
      CHECK(prob == 1.0);
    } else {
      CHECK(prob == 0.0);
    }
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("scenario: mixture reaches its target at warmup end") {
  Scenario s = make("warmup-end", Target::Mixture);
  s.params.set("step", std::int64_t{2000});  // default warmup_steps
  const Report report = run_scenario(s);
  CHECK(get_d(report.summary, "language_fraction") == 0.7);

  // The resolved echo materializes every default the run used.
  const Record& resolved = report.scenario.params;
  CHECK(get_s(resolved, "preset") == "table1");
  CHECK(get_d(resolved, "target") == 0.7);
  CHECK(get_i(resolved, "warmup_steps") == 2000);
  CHECK(get_s(resolved, "shape") == "linear");
}

TEST_CASE("scenario: simulate-batching reports both policies and a speedup") {
  Scenario s = make("bench", Target::SimulateBatching);
  s.seed = 2024;
  s.params.set("steps", std::int64_t{50});
  const Report report = run_scenario(s);
  REQUIRE(report.records.size() == 2);
  CHECK(get_s(report.records[0], "policy") == "mixed");
  CHECK(get_s(report.records[1], "policy") == "grouped");
  CHECK(report.summary.has("speedup"));
  CHECK(get_d(report.summary, "speedup") > 0.0);
  CHECK(get_i(report.records[0], "steps") == 50);

  // A single-policy run produces a single row and no speedup.
  Scenario one = make("bench-one", Target::SimulateBatching);
  one.seed = 2024;
  one.params.set("steps", std::int64_t{20});
  one.params.set("policy", std::string("grouped"));
  const Report single = run_scenario(one);
  REQUIRE(single.records.size() == 1);
  CHECK_FALSE(single.summary.has("speedup"));
}

TEST_CASE("scenario: stochastic targets demand an explicit seed") {
  Scenario s = make("no-seed", Target::SimulateBatching);
  CHECK_ERRC(ConfigError, run_scenario(s));

  Scenario eval = make("no-seed-eval", Target::Eval);
  CHECK_ERRC(ConfigError, run_scenario(eval));  // toy path draws randomly

  // Deterministic targets run fine without one.
  CHECK_NOTHROW(run_scenario(make("pure", Target::Shapes)));
}

TEST_CASE("scenario: the default shape walk ends at the fused shape") {
  const Report report = run_scenario(make("shapes", Target::Shapes));
  REQUIRE(!report.records.empty());
  CHECK(get_s(report.records.front(), "step") == "high_encoder");
  CHECK(get_s(report.records.front(), "shape") == "64x64x256 (HxWxC)");
  const Record& last = report.records.back();
  CHECK(get_s(last, "step") == "fused");
  CHECK(get_s(last, "shape") == "576x2048 (SeqxEmb)");
  CHECK(get_i(last, "tokens") == 576);
  CHECK(get_s(report.summary, "fused_shape") == "576x2048 (SeqxEmb)");
  CHECK(get_i(report.summary, "fused_tokens") == 576);
  // Grid-shaped steps have no token count; the column is simply absent.
  CHECK_FALSE(report.records.front().has("tokens"));
}

TEST_CASE("scenario: partition summary carries both layouts' bottlenecks") {
  Scenario s = make("part", Target::Partition);
  s.params.set("costs", std::string("9,1,1,1"));
  s.params.set("stages", std::int64_t{2});
  const Report report = run_scenario(s);
  REQUIRE(report.records.size() == 2);
  CHECK(get_i(report.records[0], "layers") == 1);
  CHECK(get_i(report.records[1], "layers") == 3);
  CHECK(get_d(report.summary, "bottleneck") == 9.0);
  CHECK(get_d(report.summary, "naive_bottleneck") == 10.0);
}

TEST_CASE("scenario: pipeline summary has per-schedule timings") {
  Scenario s = make("pipe", Target::Pipeline);
  s.params.set("costs", std::string("1,1,1,1"));
  s.params.set("stages", std::int64_t{4});
  const Report report = run_scenario(s);
  CHECK(get_d(report.summary, "gpipe_step_time") == 33.0);
  CHECK(get_d(report.summary, "1f1b_step_time") == 33.0);
  CHECK(get_d(report.summary, "gpipe_bubble") ==
        doctest::Approx(3.0 / 11.0).epsilon(1e-12));
  // Two schedules x four stages of rows.
  CHECK(report.records.size() == 8);
}

TEST_CASE("scenario: lr lookup through the stage presets") {
  Scenario s = make("lr-lookup", Target::Lr);
  s.params.set("model", std::string("vl7b"));
  s.params.set("stage", std::int64_t{2});
  s.params.set("step", std::int64_t{42000});
  const Report report = run_scenario(s);
  REQUIRE(report.records.size() == 1);
  CHECK(get_d(report.records[0], "lr") ==
        doctest::Approx(4.2e-5 * 0.316 * 0.316).epsilon(1e-12));
  CHECK(get_s(report.summary, "kind") == "step");
  CHECK(get_d(report.summary, "lr_at_warmup_end") == 4.2e-5);
}

TEST_CASE("scenario: adaptor-check passes at the default tolerance") {
  Scenario s = make("gradcheck", Target::AdaptorCheck);
  s.seed = 7;
  s.params.set("variant", std::string("shared"));
  s.params.set("concat", std::string("embedding"));
  s.params.set("seeds", std::int64_t{2});
  const Report report = run_scenario(s);
  REQUIRE(report.records.size() == 1);
  CHECK(std::get<bool>(*report.records[0].find("pass")));
  CHECK(get_d(report.summary, "max_rel_error") < 1e-5);
  CHECK(std::get<bool>(*report.summary.find("all_pass")));
}

TEST_CASE("scenario: unknown and ill-typed parameters are config errors") {
  Scenario s = make("typo", Target::Mixture);
  s.params.set("stpe", std::int64_t{3});
  CHECK_ERRC(ConfigError, run_scenario(s));

  Scenario bad_type = make("bad-type", Target::Mixture);
  bad_type.params.set("step", std::string("three"));
  CHECK_ERRC(ConfigError, run_scenario(bad_type));

  Scenario frac = make("frac", Target::Mixture);
  frac.params.set("step", 2.5);  // non-integral number for an integer knob
  CHECK_ERRC(ConfigError, run_scenario(frac));

  // An integral-valued double is accepted for an integer parameter.
  Scenario whole = make("whole", Target::Mixture);
  whole.params.set("step", 4.0);
  CHECK(get_i(run_scenario(whole).summary, "step") == 4);
}

TEST_CASE("scenario: module failures are wrapped with the scenario name") {
  Scenario s = make("broken-shapes", Target::Shapes);
  s.params.set("image_size", std::int64_t{1000});  // not divisible by the patch
  bool caught = false;
  try {
    run_scenario(s);
  } catch (const Error& e) {
    caught = true;
    CHECK(e.code() == Errc::ModuleError);
    CHECK(std::string(e.what()).find("broken-shapes") != std::string::npos);
    CHECK(std::string(e.what()).find("shapes") != std::string::npos);
  }
  CHECK(caught);
}

TEST_CASE("scenario: json-lines emission round-trips losslessly") {
  Scenario s = make("round-trip", Target::Mixture);
  s.params.set("step", std::int64_t{777});
  s.params.set("preset", std::string("table2"));
  const Report report = run_scenario(s);
  const std::string text = emit_report(report, ReportFormat::JsonLines);
  const Report parsed = parse_report_jsonl(text);
  CHECK(parsed == report);
  // And the header identifies the stream.
  CHECK(text.rfind("{\"schema_version\":1,\"kind\":\"vlplan-report\"", 0) == 0);
}

TEST_CASE("scenario: emission is deterministic byte for byte") {
  Scenario s = make("stable", Target::SimulateBatching);
  s.seed = 123;
  s.params.set("steps", std::int64_t{50});
  const std::string a = emit_report(run_scenario(s), ReportFormat::JsonLines);
  const std::string b = emit_report(run_scenario(s), ReportFormat::JsonLines);
  CHECK(a == b);
  CHECK(!a.empty());
}

TEST_CASE("scenario: a report reproduces itself from its own header") {
  Scenario s = make("self", Target::Mixture);
  s.params.set("step", std::int64_t{64});
  const Report first = run_scenario(s);
  // The echoed scenario is fully resolved; running it again must reproduce
  // the identical report, bytes included.
  const Report second = run_scenario(first.scenario);
  CHECK(second == first);
  CHECK(emit_report(second, ReportFormat::JsonLines) ==
        emit_report(first, ReportFormat::JsonLines));
}

TEST_CASE("scenario: csv puts the declared schema in the header row") {
  Scenario s = make("csv", Target::Mixture);
  const Report report = run_scenario(s);
  const std::string text = emit_report(report, ReportFormat::Csv);
  CHECK(text.rfind("source,modality,probability\n", 0) == 0);
  // One line per record plus the header; the summary is dropped.
  std::size_t lines = 0;
  for (char c : text)
    if (c == '\n') ++lines;
  CHECK(lines == report.records.size() + 1);
}

TEST_CASE("scenario: csv of an empty result is just the header") {
  Scenario s = make("empty-eval", Target::Eval);
  s.params.set("input_jsonl", std::string("\n"));
  const Report report = run_scenario(s);
  CHECK(report.records.empty());
  CHECK(get_i(report.summary, "instances") == 0);
  CHECK(emit_report(report, ReportFormat::Csv) ==
        "prompt_id,options,selected,best_ppl\n");
}

TEST_CASE("scenario: eval scores embedded instances") {
  Scenario s = make("embedded", Target::Eval);
  s.params.set(
      "input_jsonl",
      std::string(R"({"prompt_id":"q1","options":[)"
                  R"({"label":"A","logprobs":[-0.1,-0.2]},)"
                  R"({"label":"B","logprobs":[-2.0]}]})") +
          "\n");
  const Report report = run_scenario(s);
  REQUIRE(report.records.size() == 1);
  CHECK(get_s(report.records[0], "prompt_id") == "q1");
  CHECK(get_s(report.records[0], "selected") == "A");
  CHECK(get_i(report.records[0], "options") == 2);

  // Toy-generator path: one record per synthetic instance.
  Scenario toy = make("toy", Target::Eval);
  toy.seed = 5;
  toy.params.set("instances", std::int64_t{12});
  const Report toy_report = run_scenario(toy);
  CHECK(toy_report.records.size() == 12);
  CHECK(get_d(toy_report.summary, "mean_selected_ppl") >= 1.0);
}

TEST_CASE("scenario: pretty table is labeled for humans") {
  Scenario s = make("pretty", Target::Mixture);
  const std::string text = emit_report(run_scenario(s), ReportFormat::PrettyTable);
  CHECK(text.find("scenario  pretty") != std::string::npos);
  CHECK(text.find("source") != std::string::npos);
  CHECK(text.find("probability") != std::string::npos);
  CHECK(text.find("language_fraction = ") != std::string::npos);
}

TEST_CASE("scenario: config json round-trip") {
  Scenario s = make("json-me", Target::Pack);
  s.seed = 99;
  s.format = ReportFormat::Csv;
  s.params.set("samples", std::int64_t{32});
  s.params.set("capacity", std::int64_t{2048});
  const Scenario back = scenario_from_json(scenario_to_json(s));
  CHECK(back == s);
}

TEST_CASE("scenario: config schema violations") {
  CHECK_ERRC(ConfigError, scenario_from_json("not json"));
  CHECK_ERRC(ConfigError, scenario_from_json(R"({"version":2,"name":"x","target":"lr"})"));
  CHECK_ERRC(ConfigError, scenario_from_json(R"({"name":"x","target":"lr"})"));
  CHECK_ERRC(ConfigError, scenario_from_json(R"({"version":1,"name":"","target":"lr"})"));
  CHECK_ERRC(ConfigError,
             scenario_from_json(R"({"version":1,"name":"x","target":"frobnicate"})"));
  CHECK_ERRC(ConfigError,
             scenario_from_json(
                 R"({"version":1,"name":"x","target":"lr","seed":-4})"));
  CHECK_ERRC(ConfigError,
             scenario_from_json(
                 R"({"version":1,"name":"x","target":"lr","extra":true})"));
  CHECK_ERRC(UnsupportedFormat,
             scenario_from_json(
                 R"({"version":1,"name":"x","target":"lr","format":"yaml"})"));
}

TEST_CASE("scenario: format and target names round-trip") {
  for (const ReportFormat f :
       {ReportFormat::JsonLines, ReportFormat::Csv, ReportFormat::PrettyTable})
    CHECK(parse_report_format(report_format_name(f)) == f);
  for (const Target t :
       {Target::Mixture, Target::SimulateBatching, Target::Pack,
        Target::Partition, Target::Pipeline, Target::Shapes,
        Target::AdaptorCheck, Target::Lr, Target::Eval})
    CHECK(parse_target(target_name(t)) == t);
  CHECK_ERRC(UnsupportedFormat, parse_report_format("yaml"));
  CHECK_ERRC(ConfigError, parse_target("mixtures"));
}

TEST_CASE("scenario: report parser rejects malformed streams") {
  CHECK_ERRC(ConfigError, parse_report_jsonl(""));
  // A header alone has no summary line.
  Scenario s = make("hdr", Target::Shapes);
  const std::string text = emit_report(run_scenario(s), ReportFormat::JsonLines);
  const std::string header_only = text.substr(0, text.find('\n') + 1);
  CHECK_ERRC(ConfigError, parse_report_jsonl(header_only));
  CHECK_ERRC(ConfigError, parse_report_jsonl("{\"kind\":\"other\"}\n"));
}

TEST_CASE("scenario: sweeps run in name order and reject duplicates") {
  const std::string config = R"({
    "version": 1,
    "scenarios": [
      {"version": 1, "name": "b-second", "target": "lr",
       "params": {"model": "vl1b", "stage": 1, "samples": 3}},
      {"version": 1, "name": "a-first", "target": "mixture",
       "params": {"step": 10}}
    ]
  })";
  const std::vector<Report> reports = run_sweep(config);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].scenario.name == "a-first");
  CHECK(reports[1].scenario.name == "b-second");

  const std::string dup = R"({
    "version": 1,
    "scenarios": [
      {"version": 1, "name": "same", "target": "shapes"},
      {"version": 1, "name": "same", "target": "lr"}
    ]
  })";
  CHECK_ERRC(ConfigError, run_sweep(dup));
  CHECK_ERRC(ConfigError, run_sweep(R"({"version": 1, "scenarios": 5})"));
  CHECK_ERRC(ConfigError, run_sweep(R"({"version": 1})"));
}
