// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/stage.hpp"

namespace hdff {

std::string to_string(StageId s) {
  switch (s) {
    case StageId::kInit: return "init";
    case StageId::kSelectiveFt: return "selective";
    case StageId::kComprehensiveFt: return "full";
    case StageId::kFusionTrain: return "fusion";
  }
  return "?";
}

std::string display_name(StageId s) {
  switch (s) {
    case StageId::kInit: return "INIT";
    case StageId::kSelectiveFt: return "SELECTIVE_FT";
    case StageId::kComprehensiveFt: return "COMPREHENSIVE_FT";
    case StageId::kFusionTrain: return "FUSION_TRAIN";
  }
  return "?";
}

StageId parse_stage(const std::string& s) {
  if (s == "init") return StageId::kInit;
  if (s == "selective") return StageId::kSelectiveFt;
  if (s == "full") return StageId::kComprehensiveFt;
  if (s == "fusion") return StageId::kFusionTrain;
  throw ConfigError("unknown stage '" + s + "' (expected selective, full or fusion)");
}

FreezeMode bound_freeze(StageId s) {
  switch (s) {
    case StageId::kSelectiveFt: return FreezeMode::kHeadOnly;
    case StageId::kComprehensiveFt: return FreezeMode::kFull;
    case StageId::kFusionTrain: return FreezeMode::kFusionOnly;
    case StageId::kInit: break;
  }
  throw ConfigError("stage INIT does not train and has no freeze policy");
}

bool legal_transition(StageId from, StageId to) {
  return static_cast<int>(to) == static_cast<int>(from) + 1;
}

void validate_stage_sequence(std::span<const StageId> stages) {
  StageId prev = StageId::kInit;
  for (auto s : stages) {
    if (!legal_transition(prev, s))
      throw ConfigError("illegal stage transition " + display_name(prev) + " -> " + display_name(s) +
                        "; stages must run INIT -> SELECTIVE_FT -> COMPREHENSIVE_FT -> FUSION_TRAIN");
    prev = s;
  }
  if (prev != StageId::kFusionTrain)
    throw ConfigError("stage sequence ends at " + display_name(prev) + " instead of FUSION_TRAIN");
}

void StageConfig::validate() const {
  if (stage == StageId::kInit) throw ConfigError("INIT is not a trainable stage");
  if (freeze != bound_freeze(stage))
    throw ConfigError("stage " + display_name(stage) + " requires freeze policy " + to_string(bound_freeze(stage)) +
                      ", got " + to_string(freeze));
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(optimizer.lr > 0)) throw ConfigError("lr must be > 0");
  if (optimizer.weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (scheduler.kind == ScheduleKind::kStep && (scheduler.step_size < 1 || !(scheduler.gamma > 0)))
    throw ConfigError("step scheduler needs step_size >= 1 and gamma > 0");
}

StageConfig default_stage_config(StageId s) {
  StageConfig c;
  c.stage = s;
  c.freeze = bound_freeze(s);
  switch (s) {
    case StageId::kSelectiveFt: c.optimizer.lr = 1e-3; break;
    case StageId::kComprehensiveFt: c.optimizer.lr = 1e-5; break;
    case StageId::kFusionTrain: c.optimizer.lr = 1e-4; break;
    case StageId::kInit: break;
  }
  return c;
}

}  // namespace hdff
