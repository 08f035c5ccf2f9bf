/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include "vlplan/catalog.hpp"

#include <cmath>
#include <unordered_set>
#include <utility>

#include "json_util.hpp"

namespace vlplan {

const char* modality_name(Modality m) noexcept {
  return m == Modality::Language ? "language" : "multimodal";
}

const char* catalog_stage_name(CatalogStage s) noexcept {
  return s == CatalogStage::Pretrain ? "pretrain" : "sft";
}

Catalog make_catalog(CatalogStage stage, std::vector<DataSource> sources) {
  if (sources.empty()) fail(Errc::InvalidArgument, "catalog has no sources");

  std::unordered_set<std::string> seen;
  double sum = 0.0;
  bool has_language = false;
  bool has_multimodal = false;
  for (const DataSource& s : sources) {
    if (s.name.empty()) fail(Errc::InvalidArgument, "source with empty name");
    if (!seen.insert(s.name).second)
      fail(Errc::DuplicateName, "duplicate source name \"" + s.name + "\"");
    if (!std::isfinite(s.weight) || s.weight < 0.0)
      fail(Errc::InvalidArgument,
           "source \"" + s.name + "\" has invalid weight " +
               detail::fmt_double(s.weight));
    if (s.mean_seq_len < 0)
      fail(Errc::InvalidArgument,
           "source \"" + s.name + "\" has negative mean_seq_len");
    sum += s.weight;
    (s.modality == Modality::Language ? has_language : has_multimodal) = true;
  }

  if (std::abs(sum - 1.0) > kWeightSumTolerance)
    fail(Errc::WeightSumMismatch,
         "source weights sum to " + detail::fmt_double(sum) + ", expected 1");
  // In-tolerance drift is divided out so the invariant sum == 1 holds exactly
  // (to rounding) for every valid catalog; this never rescales a catalog that
  // failed the check above.
  for (DataSource& s : sources) s.weight /= sum;

  if (stage == CatalogStage::Pretrain && !(has_language && has_multimodal))
    fail(Errc::MissingModality,
         std::string("pretrain catalog must cover both modalities; missing ") +
             modality_name(has_language ? Modality::Multimodal
                                        : Modality::Language));

  for (DataSource& s : sources) {
    if (s.mean_seq_len == 0)
      s.mean_seq_len = s.modality == Modality::Language
                           ? kDefaultLanguageSeqLen
                           : kDefaultMultimodalSeqLen;
  }
  return Catalog{stage, std::move(sources)};
}

namespace {

Modality parse_modality(const std::string& text, const char* where) {
  if (text == "language") return Modality::Language;
  if (text == "multimodal") return Modality::Multimodal;
  fail(Errc::ConfigError, std::string(where) +
                              ": modality must be \"language\" or "
                              "\"multimodal\", got \"" +
                              text + "\"");
}

CatalogStage parse_stage(const std::string& text, const char* where) {
  if (text == "pretrain") return CatalogStage::Pretrain;
  if (text == "sft") return CatalogStage::Sft;
  fail(Errc::ConfigError, std::string(where) +
                              ": stage must be \"pretrain\" or \"sft\", got \"" +
                              text + "\"");
}

}  // namespace

Catalog load_catalog(const std::string& json_text) {
  using detail::json;
  const json doc = detail::parse_json(json_text, "catalog");
  detail::check_keys(doc, {"version"}, {"preset", "stage", "sources"},
                     "catalog");
  detail::check_version(doc, 1, "catalog");

  if (doc.contains("preset")) {
    if (doc.contains("sources") || doc.contains("stage"))
      fail(Errc::ConfigError,
           "catalog: \"preset\" cannot be combined with \"stage\"/\"sources\"");
    return preset_catalog(detail::as_string(doc["preset"], "catalog.preset"));
  }

  if (!doc.contains("sources"))
    fail(Errc::ConfigError, "catalog: need either \"preset\" or \"sources\"");

  CatalogStage stage = CatalogStage::Pretrain;
  if (doc.contains("stage"))
    stage = parse_stage(detail::as_string(doc["stage"], "catalog.stage"),
                        "catalog.stage");

  const json& arr = doc["sources"];
  if (!arr.is_array())
    fail(Errc::ConfigError, "catalog.sources: expected an array");
  std::vector<DataSource> sources;
  sources.reserve(arr.size());
  for (const json& entry : arr) {
    detail::check_keys(entry, {"name", "modality", "weight"},
                       {"category", "mean_seq_len"}, "catalog source");
    DataSource s;
    s.name = detail::as_string(entry["name"], "source.name");
    s.modality = parse_modality(
        detail::as_string(entry["modality"], "source.modality"),
        "source.modality");
    if (entry.contains("category"))
      s.category = detail::as_string(entry["category"], "source.category");
    s.weight = detail::as_number(entry["weight"], "source.weight");
    if (entry.contains("mean_seq_len")) {
      const json& len = entry["mean_seq_len"];
      if (!len.is_number_integer())
        fail(Errc::ConfigError, "source.mean_seq_len: expected an integer");
      s.mean_seq_len = len.get<int>();
    }
    sources.push_back(std::move(s));
  }
  return make_catalog(stage, std::move(sources));
}

Catalog preset_catalog(std::string_view name) {
  const Modality kLang = Modality::Language;
  const Modality kMm = Modality::Multimodal;
  if (name == "table1") {
    // Pretraining mixture: interleaved image-text, captions, tables/charts,
    // web code renderings, scene OCR, document OCR, and a text-only corpus
    // that carries 70% of the mass to protect language ability.
    return make_catalog(
        CatalogStage::Pretrain,
        {
            {"interleaved", kMm, "interleaved", 0.131, 0},
            {"caption", kMm, "caption", 0.111, 0},
            {"table_chart", kMm, "table_chart", 0.021, 0},
            {"web_code", kMm, "web_code", 0.004, 0},
            {"scene_ocr", kMm, "scene_ocr", 0.012, 0},
            {"doc_ocr", kMm, "doc_ocr", 0.021, 0},
            {"text_only", kLang, "text_only", 0.700, 0},
        });
  }
  if (name == "table2") {
    // Supervised fine-tuning mixture; roughly half text-only instruction
    // data, half multimodal instruction data.
    return make_catalog(
        CatalogStage::Sft,
        {
            {"in_house", kMm, "in_house", 0.105, 0},
            {"general_mm", kMm, "general_mm", 0.355, 0},
            {"table_chart", kMm, "table_chart", 0.041, 0},
            {"web_code", kMm, "web_code", 0.020, 0},
            {"text_sft", kLang, "text_sft", 0.479, 0},
        });
  }
  fail(Errc::ConfigError,
       "unknown catalog preset \"" + std::string(name) +
           "\" (available: table1, table2)");
}

double modality_fraction(const Catalog& catalog, Modality m) {
  double total = 0.0;
  for (const DataSource& s : catalog.sources)
    if (s.modality == m) total += s.weight;
  return total;
}

bool has_positive_mass(const Catalog& catalog, Modality m) {
  for (const DataSource& s : catalog.sources)
    if (s.modality == m && s.weight > 0.0) return true;
  return false;
}

int effective_seq_len(const DataSource& source) {
  if (source.mean_seq_len > 0) return source.mean_seq_len;
  return source.modality == Modality::Language ? kDefaultLanguageSeqLen
                                               : kDefaultMultimodalSeqLen;
}

}  // namespace vlplan
