/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "vlplan/error.hpp"

namespace vlplan {

enum class Modality { Language, Multimodal };

/// Which phase of the training recipe a catalog feeds. Pretraining catalogs
/// must cover both modalities; supervised fine-tuning catalogs may not.
enum class CatalogStage { Pretrain, Sft };

const char* modality_name(Modality m) noexcept;
const char* catalog_stage_name(CatalogStage s) noexcept;

/// One named corpus with its steady-state sampling weight.
struct DataSource {
  std::string name;
  Modality modality = Modality::Language;
  std::string category;      // free-form taxonomy tag ("caption", "doc_ocr", ...)
  double weight = 0.0;       // steady-state probability mass, weights sum to 1
  int mean_seq_len = 0;      // tokens per drawn sample; 0 = apply modality default
};

struct Catalog {
  CatalogStage stage = CatalogStage::Pretrain;
  std::vector<DataSource> sources;
};

/// Default tokens-per-sample applied when a source does not specify one.
constexpr int kDefaultLanguageSeqLen = 4096;
constexpr int kDefaultMultimodalSeqLen = 2048;

/// Weight sums are accepted when within this distance of 1 (then cleaned up
/// by exact division so downstream code can rely on the sum being 1).
constexpr double kWeightSumTolerance = 1e-6;

/// Validates and canonicalizes a catalog:
///  - names must be unique (DuplicateName)
///  - weights must be >= 0 and mean_seq_len >= 0 (InvalidArgument)
///  - weights must sum to 1 within kWeightSumTolerance (WeightSumMismatch,
///    message reports the actual sum); in-tolerance sums are divided through
///    so the stored weights sum to 1 to within 1e-9
///  - pretrain catalogs must have at least one source of each modality
///    (MissingModality); sft catalogs may be single-modality
///  - zero mean_seq_len is replaced by the modality default
Catalog make_catalog(CatalogStage stage, std::vector<DataSource> sources);

/// Parses the versioned JSON catalog document and validates via make_catalog.
/// Document shape:
///   {"version": 1, "stage": "pretrain"|"sft",
///    "sources": [{"name":..., "modality":"language"|"multimodal",
///                 "category":..., "weight":..., "mean_seq_len":...}, ...]}
/// or {"version": 1, "preset": "table1"|"table2"}.
/// Unknown keys anywhere are ConfigError.
Catalog load_catalog(const std::string& json_text);

/// Built-in catalogs. "table1" is the pretraining mixture (text-only corpus
/// at weight .700 plus six multimodal source groups); "table2" is the
/// supervised fine-tuning mixture.
Catalog preset_catalog(std::string_view name);

/// Total steady-state weight carried by one modality.
double modality_fraction(const Catalog& catalog, Modality m);

/// Sum of weights of sources with the given modality and weight > 0 is
/// positive (i.e. the modality can actually be sampled from).
bool has_positive_mass(const Catalog& catalog, Modality m);

/// Resolved tokens-per-sample for a source (field value or modality default).
int effective_seq_len(const DataSource& source);

}  // namespace vlplan
