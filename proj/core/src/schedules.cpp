/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include "vlplan/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace vlplan {

const char* lr_kind_name(LrKind k) noexcept {
  return k == LrKind::Cosine ? "cosine" : "step";
}

const char* train_stage_name(TrainStage s) noexcept {
  switch (s) {
    case TrainStage::AdaptorWarmup: return "adaptor_warmup";
    case TrainStage::JointPretrain: return "joint_pretrain";
    case TrainStage::Sft: return "sft";
  }
  return "?";
}

const char* model_preset_name(ModelPreset m) noexcept {
  return m == ModelPreset::VL1B ? "vl1b" : "vl7b";
}

const char* component_name(Component c) noexcept {
  switch (c) {
    case Component::VisionEncoderLow: return "vision_encoder_low";
    case Component::VisionEncoderHigh: return "vision_encoder_high";
    case Component::Adaptor: return "adaptor";
    case Component::LanguageModel: return "language_model";
  }
  return "?";
}

ModelPreset parse_model_preset(std::string_view name) {
  if (name == "vl1b") return ModelPreset::VL1B;
  if (name == "vl7b") return ModelPreset::VL7B;
  fail(Errc::ConfigError, "unknown model preset \"" + std::string(name) +
                              "\" (available: vl1b, vl7b)");
}

std::vector<DecayPoint> default_decay_points() {
  return {{0.8, 0.316}, {0.9, 0.316}};
}

LRSchedule cosine_schedule(double peak, long warmup_steps, long total_steps,
                           double floor) {
  LRSchedule s;
  s.kind = LrKind::Cosine;
  s.peak = peak;
  s.warmup_steps = warmup_steps;
  s.total_steps = total_steps;
  s.floor = floor;
  check_lr_schedule(s);
  return s;
}

LRSchedule step_schedule(double peak, long warmup_steps, long total_steps,
                         std::vector<DecayPoint> decay_points) {
  LRSchedule s;
  s.kind = LrKind::Step;
  s.peak = peak;
  s.warmup_steps = warmup_steps;
  s.total_steps = total_steps;
  s.decay_points = std::move(decay_points);
  check_lr_schedule(s);
  return s;
}

void check_lr_schedule(const LRSchedule& schedule) {
  if (!(schedule.peak > 0.0) || !std::isfinite(schedule.peak))
    fail(Errc::InvalidArgument, "peak learning rate must be > 0");
  if (schedule.warmup_steps < 0 || schedule.total_steps < 1 ||
      schedule.warmup_steps > schedule.total_steps)
    fail(Errc::InvalidArgument,
         "need 0 <= warmup_steps <= total_steps and total_steps >= 1");
  if (schedule.kind == LrKind::Cosine) {
    if (schedule.floor < 0.0 || schedule.floor > schedule.peak ||
        !std::isfinite(schedule.floor))
      fail(Errc::InvalidArgument, "cosine floor must be in [0, peak]");
  } else {
    const double warmup_fraction =
        static_cast<double>(schedule.warmup_steps) /
        static_cast<double>(schedule.total_steps);
    double previous = warmup_fraction;
    for (const DecayPoint& point : schedule.decay_points) {
      if (!(point.fraction > previous) || point.fraction > 1.0)
        fail(Errc::InvalidArgument,
             "decay fractions must be strictly increasing, in (0, 1], and "
             "beyond the warmup fraction");
      if (!(point.multiplier > 0.0) || point.multiplier > 1.0)
        fail(Errc::InvalidArgument, "decay multipliers must be in (0, 1]");
      previous = point.fraction;
    }
  }
}

double lr_at(const LRSchedule& schedule, long step) {
  check_lr_schedule(schedule);
  if (step < 0 || step > schedule.total_steps)
    fail(Errc::StepOutOfRange,
         "step " + std::to_string(step) + " outside [0, " +
             std::to_string(schedule.total_steps) + "]");
  if (step < schedule.warmup_steps)
    return schedule.peak * static_cast<double>(step) /
           static_cast<double>(schedule.warmup_steps);

  if (schedule.kind == LrKind::Cosine) {
    const long span = schedule.total_steps - schedule.warmup_steps;
    if (span == 0) return schedule.peak;  // degenerate: warmup is the whole run
    const double progress = static_cast<double>(step - schedule.warmup_steps) /
                            static_cast<double>(span);
    const double pi = 3.141592653589793238462643383;
    return schedule.floor + (schedule.peak - schedule.floor) * 0.5 *
                                (1.0 + std::cos(pi * progress));
  }

  const double progress =
      static_cast<double>(step) / static_cast<double>(schedule.total_steps);
  double lr = schedule.peak;
  for (const DecayPoint& point : schedule.decay_points)
    if (progress >= point.fraction) lr *= point.multiplier;
  return lr;
}

namespace {

std::vector<Component> sorted(std::vector<Component> components) {
  std::sort(components.begin(), components.end());
  return components;
}

StageConfig make_stage(TrainStage stage, ModelPreset model, LRSchedule lr,
                       long batch_size, long seq_len, bool packing, bool pp) {
  StageConfig config;
  config.stage = stage;
  config.lr = std::move(lr);
  config.batch_size = batch_size;
  config.seq_len = seq_len;
  config.training_steps = config.lr.total_steps;
  config.sequence_packing = packing;
  config.pipeline_parallel = pp;
  config.trainable = trainable_set(stage, model);
  return config;
}

}  // namespace

std::vector<StageConfig> stage_presets(ModelPreset model) {
  std::vector<StageConfig> stages;
  // Stage 1 (adaptor warmup) is identical for both sizes.
  stages.push_back(make_stage(TrainStage::AdaptorWarmup, model,
                              cosine_schedule(1.0e-3, 128, 15000), 256, 512,
                              false, false));
  if (model == ModelPreset::VL1B) {
    stages.push_back(make_stage(TrainStage::JointPretrain, model,
                                step_schedule(3e-5, 2000, 96000), 1024, 4096,
                                true, false));
    stages.push_back(make_stage(TrainStage::Sft, model,
                                cosine_schedule(2.0e-5, 256, 10000), 256, 4096,
                                false, false));
  } else {
    stages.push_back(make_stage(TrainStage::JointPretrain, model,
                                step_schedule(4.2e-5, 2000, 42000), 2304, 4096,
                                true, true));
    stages.push_back(make_stage(TrainStage::Sft, model,
                                cosine_schedule(2.0e-5, 256, 10000), 256, 4096,
                                false, true));
  }
  return stages;
}

std::vector<Component> all_components(ModelPreset model) {
  if (model == ModelPreset::VL1B)
    return sorted({Component::VisionEncoderLow, Component::Adaptor,
                   Component::LanguageModel});
  return sorted({Component::VisionEncoderLow, Component::VisionEncoderHigh,
                 Component::Adaptor, Component::LanguageModel});
}

std::vector<Component> trainable_set(TrainStage stage, ModelPreset) {
  switch (stage) {
    case TrainStage::AdaptorWarmup:
      return sorted({Component::Adaptor});
    case TrainStage::JointPretrain:
      return sorted({Component::Adaptor, Component::LanguageModel});
    case TrainStage::Sft:
      // The high-resolution encoder stays frozen even here; the
      // low-resolution encoder joins training only in fine-tuning.
      return sorted({Component::VisionEncoderLow, Component::Adaptor,
                     Component::LanguageModel});
  }
  fail(Errc::InvalidArgument, "unknown training stage");
}

std::vector<Component> frozen_set(TrainStage stage, ModelPreset model) {
  const std::vector<Component> universe = all_components(model);
  const std::vector<Component> active = trainable_set(stage, model);
  std::vector<Component> frozen;
  for (Component c : universe)
    if (std::find(active.begin(), active.end(), c) == active.end())
      frozen.push_back(c);
  return frozen;
}

}  // namespace vlplan
