/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include "vlplan/mixture.hpp"

#include <cmath>
#include <utility>

#include "json_util.hpp"

namespace vlplan {

MixtureSpec make_mixture_spec(Catalog catalog, WarmupSchedule warmup,
                              double sft_admixture) {
  if (!std::isfinite(warmup.start_language_ratio) ||
      warmup.start_language_ratio < 0.0 || warmup.start_language_ratio > 1.0)
    fail(Errc::InvalidArgument, "start_language_ratio must be in [0, 1]");
  if (!std::isfinite(warmup.target_language_ratio) ||
      warmup.target_language_ratio < 0.0 || warmup.target_language_ratio > 1.0)
    fail(Errc::InvalidArgument, "target_language_ratio must be in [0, 1]");
  if (warmup.warmup_steps < 0)
    fail(Errc::InvalidArgument, "warmup_steps must be >= 0");
  if (!std::isfinite(sft_admixture) || sft_admixture < 0.0 ||
      sft_admixture > 0.1)
    fail(Errc::InvalidArgument, "sft_admixture must be in [0, 0.1]");

  // The trajectory spans [min(start,target), max(start,target)] in language
  // fraction; any point strictly inside (0,1) needs both modalities drawable.
  const double lo =
      std::min(warmup.start_language_ratio, warmup.target_language_ratio);
  const double hi =
      std::max(warmup.start_language_ratio, warmup.target_language_ratio);
  if (hi > 0.0 && !has_positive_mass(catalog, Modality::Language))
    fail(Errc::EmptyModality,
         "warmup requires language mass but no language source has weight > 0");
  if (lo < 1.0 && !has_positive_mass(catalog, Modality::Multimodal))
    fail(Errc::EmptyModality,
         "warmup requires multimodal mass but no multimodal source has "
         "weight > 0");
  return MixtureSpec{std::move(catalog), warmup, sft_admixture};
}

double language_fraction_at(const WarmupSchedule& warmup, long step) {
  if (step < 0) fail(Errc::InvalidArgument, "step must be >= 0");
  if (warmup.warmup_steps == 0 || step >= warmup.warmup_steps)
    return warmup.target_language_ratio;
  const double progress =
      static_cast<double>(step) / static_cast<double>(warmup.warmup_steps);
  double eased = progress;
  if (warmup.shape == WarmupShape::Cosine)
    eased = 0.5 * (1.0 - std::cos(3.141592653589793238462643383 * progress));
  return warmup.start_language_ratio +
         (warmup.target_language_ratio - warmup.start_language_ratio) * eased;
}

std::vector<SourceProbability> mixture_at(const MixtureSpec& spec, long step) {
  const double lang = language_fraction_at(spec.warmup, step);
  const double mm = 1.0 - lang;

  double lang_weight = 0.0;
  double mm_weight = 0.0;
  for (const DataSource& s : spec.catalog.sources)
    (s.modality == Modality::Language ? lang_weight : mm_weight) += s.weight;

  // Catalog multimodal sources share (1 - sft_admixture) of the multimodal
  // mass; the admixture pseudo-source takes the rest.
  const double mm_catalog_share = mm * (1.0 - spec.sft_admixture);

  std::vector<SourceProbability> out;
  out.reserve(spec.catalog.sources.size() + 1);
  for (const DataSource& s : spec.catalog.sources) {
    SourceProbability p;
    p.source = s.name;
    p.modality = s.modality;
    if (s.modality == Modality::Language)
      p.probability = lang_weight > 0.0 ? lang * s.weight / lang_weight : 0.0;
    else
      p.probability =
          mm_weight > 0.0 ? mm_catalog_share * s.weight / mm_weight : 0.0;
    out.push_back(std::move(p));
  }
  if (spec.sft_admixture > 0.0) {
    SourceProbability p;
    p.source = kSftAdmixtureSource;
    p.modality = Modality::Multimodal;
    p.is_sft_admixture = true;
    p.probability = spec.sft_admixture * mm;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<double> expected_counts(const MixtureSpec& spec, long step,
                                    long batch_size) {
  if (batch_size < 0) fail(Errc::InvalidArgument, "batch_size must be >= 0");
  const std::vector<SourceProbability> probs = mixture_at(spec, step);
  std::vector<double> counts;
  counts.reserve(probs.size());
  for (const SourceProbability& p : probs)
    counts.push_back(p.probability * static_cast<double>(batch_size));
  return counts;
}

}  // namespace vlplan
