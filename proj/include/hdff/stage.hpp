// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "hdff/fusion.hpp"
#include "hdff/optim.hpp"

namespace hdff {

// INIT -> SELECTIVE_FT -> COMPREHENSIVE_FT run per sub-model; FUSION_TRAIN
// runs once, after every sub-model finished COMPREHENSIVE_FT.
enum class StageId { kInit, kSelectiveFt, kComprehensiveFt, kFusionTrain };

// Config/CLI tokens: init, selective, full, fusion.
std::string to_string(StageId s);
StageId parse_stage(const std::string& s);
std::string display_name(StageId s);  // INIT, SELECTIVE_FT, ...

// The only freeze policy each training stage accepts.
FreezeMode bound_freeze(StageId s);

bool legal_transition(StageId from, StageId to);

// Throws ConfigError unless the sequence walks the legal transitions from
// INIT (implicit) through FUSION_TRAIN with no skips or reversals.
void validate_stage_sequence(std::span<const StageId> stages);

inline const std::vector<StageId>& canonical_stages() {
  static const std::vector<StageId> s = {StageId::kSelectiveFt, StageId::kComprehensiveFt, StageId::kFusionTrain};
  return s;
}

struct StageConfig {
  StageId stage = StageId::kSelectiveFt;
  int epochs = 1;
  FreezeMode freeze = FreezeMode::kHeadOnly;
  OptimizerConfig optimizer;
  ScheduleConfig scheduler;
  int batch_size = 32;
  bool augment = true;
  std::uint64_t seed = 0;

  // Rejects stage/freeze mismatches and non-positive sizes.
  void validate() const;
  bool operator==(const StageConfig&) const = default;
};

// Defaults for a stage: HEAD_ONLY 1e-3, FULL 1e-5, FUSION_ONLY 1e-4.
StageConfig default_stage_config(StageId s);

}  // namespace hdff
