/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <string_view>
#include <vector>

#include "vlplan/error.hpp"

namespace vlplan {

enum class LrKind { Cosine, Step };

const char* lr_kind_name(LrKind k) noexcept;

/// One step-schedule drop: once progress (step / total_steps) reaches
/// `fraction`, the learning rate is multiplied by `multiplier` (drops
/// compound).
struct DecayPoint {
  double fraction = 0.0;
  double multiplier = 1.0;
};

/// The default drop points, (0.8, x0.316) and (0.9, x0.316), are an artifact
/// convention (two drops to ~10% of peak by 90% of training), not a
/// reference value.
std::vector<DecayPoint> default_decay_points();

struct LRSchedule {
  LrKind kind = LrKind::Cosine;
  double peak = 0.0;
  long warmup_steps = 0;
  long total_steps = 0;
  double floor = 0.0;                    // Cosine only; absolute lr floor
  std::vector<DecayPoint> decay_points;  // Step only
};

LRSchedule cosine_schedule(double peak, long warmup_steps, long total_steps,
                           double floor = 0.0);
LRSchedule step_schedule(double peak, long warmup_steps, long total_steps,
                         std::vector<DecayPoint> decay_points = default_decay_points());

/// Validates ranges: peak > 0, 0 <= warmup <= total, 0 <= floor <= peak,
/// step multipliers in (0,1], fractions strictly increasing within (0,1] and
/// past the warmup boundary (keeps lr_at continuous at warmup end).
void check_lr_schedule(const LRSchedule& schedule);

/// Learning rate at a step in [0, total_steps] (else StepOutOfRange).
/// Warmup is linear from 0 to peak over warmup_steps; at step == warmup_steps
/// the value is exactly peak. After warmup, Cosine decays from peak to floor
/// with 0.5*(1 + cos(pi * post-warmup progress)); Step multiplies peak by
/// every decay multiplier whose fraction of total_steps has been reached.
double lr_at(const LRSchedule& schedule, long step);

/// The three-stage training recipe: adaptor-only warmup on caption-style
/// data, joint language-multimodal pretraining, then supervised fine-tuning.
enum class TrainStage { AdaptorWarmup, JointPretrain, Sft };

enum class ModelPreset { VL1B, VL7B };

/// Trainable/frozen units. The 1B model has no high-resolution encoder (its
/// vision tower is the low-resolution encoder alone), so its component
/// universe excludes VisionEncoderHigh.
enum class Component {
  VisionEncoderLow,
  VisionEncoderHigh,
  Adaptor,
  LanguageModel,
};

const char* train_stage_name(TrainStage s) noexcept;
const char* model_preset_name(ModelPreset m) noexcept;
const char* component_name(Component c) noexcept;

ModelPreset parse_model_preset(std::string_view name);  // "vl1b" | "vl7b"

/// Full per-stage hyperparameter set. Optimizer fields are stored metadata
/// only (nothing simulates AdamW moments).
struct StageConfig {
  TrainStage stage = TrainStage::AdaptorWarmup;
  LRSchedule lr;
  long batch_size = 0;
  long seq_len = 0;
  long training_steps = 0;
  bool sequence_packing = false;
  bool pipeline_parallel = false;
  std::vector<Component> trainable;  // sorted, duplicate-free
  double weight_decay = 0.0;
  double grad_clip = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
};

/// The reference three-stage recipes for both model sizes.
std::vector<StageConfig> stage_presets(ModelPreset model);

/// Components this model is made of.
std::vector<Component> all_components(ModelPreset model);

/// Which components receive gradients in a stage:
/// AdaptorWarmup -> {Adaptor}; JointPretrain -> {Adaptor, LanguageModel};
/// Sft -> {VisionEncoderLow, Adaptor, LanguageModel} (the high-resolution
/// encoder stays frozen even in fine-tuning).
std::vector<Component> trainable_set(TrainStage stage, ModelPreset model);

/// Complement of trainable_set within all_components(model).
std::vector<Component> frozen_set(TrainStage stage, ModelPreset model);

}  // namespace vlplan
