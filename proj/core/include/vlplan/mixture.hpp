/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vlplan/catalog.hpp"

namespace vlplan {

enum class WarmupShape { Linear, Cosine };

/// Modality warmup: training starts language-heavy and ramps the language
/// fraction toward its steady-state target over `warmup_steps`. Ramping in
/// multimodal data gradually (instead of mixing at the target ratio from
/// step 0) avoids the early language-ability regression that competing
/// gradients cause.
struct WarmupSchedule {
  double start_language_ratio = 1.0;
  double target_language_ratio = 0.7;
  long warmup_steps = 0;  // 0 = constant at the target from step 0
  WarmupShape shape = WarmupShape::Linear;
};

/// A pretraining data plan: a catalog plus the warmup trajectory and an
/// optional fine-tuning-style admixture carved out of the multimodal share.
struct MixtureSpec {
  Catalog catalog;
  WarmupSchedule warmup;
  double sft_admixture = 0.0;  // fraction of the multimodal share, in [0, 0.1]
};

/// Name of the pseudo-source that carries the sft admixture in mixture
/// output (present only when sft_admixture > 0).
inline constexpr const char* kSftAdmixtureSource = "sft_admixture";

/// Validates ranges and that the warmup trajectory never asks for probability
/// mass on a modality the catalog cannot supply (EmptyModality).
MixtureSpec make_mixture_spec(Catalog catalog, WarmupSchedule warmup,
                              double sft_admixture = 0.0);

/// Language fraction of the batch distribution at a global step.
/// Steps at or beyond warmup_steps return the target exactly. Linear shape
/// interpolates on step/warmup_steps; Cosine eases with
/// 0.5*(1 - cos(pi * progress)) applied to the same endpoints.
double language_fraction_at(const WarmupSchedule& warmup, long step);

/// One source's sampling probability at a given step.
struct SourceProbability {
  std::string source;
  Modality modality = Modality::Language;
  bool is_sft_admixture = false;
  double probability = 0.0;
};

/// Full per-source distribution at a step. Probabilities sum to 1. Within a
/// modality, sources keep the catalog's relative proportions at every step;
/// only the language/multimodal split moves during warmup. When
/// sft_admixture > 0, a trailing pseudo-source takes
/// sft_admixture * (1 - language_fraction), and catalog multimodal sources
/// scale by (1 - sft_admixture) within the multimodal share.
std::vector<SourceProbability> mixture_at(const MixtureSpec& spec, long step);

/// Expected sample counts for one batch: probability * batch_size, aligned
/// index-for-index with mixture_at(spec, step). batch_size may be 0.
std::vector<double> expected_counts(const MixtureSpec& spec, long step,
                                    long batch_size);

}  // namespace vlplan
