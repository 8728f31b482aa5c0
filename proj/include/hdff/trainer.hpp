// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hdff/fusion.hpp"
#include "hdff/metrics.hpp"
#include "hdff/stage.hpp"

namespace hdff {

struct EpochRecord {
  int epoch = 0;  // 1-based
  double lr = 0.0;  // learning rate at the start of the epoch
  double train_loss = 0.0;
  std::optional<Metrics> val;

  bool operator==(const EpochRecord&) const = default;
};

nlohmann::json to_json(const EpochRecord& r);
EpochRecord epoch_record_from_json(const nlohmann::json& j);

// Everything needed to continue a stage exactly where it stopped.
struct CheckpointState {
  StageId stage = StageId::kSelectiveFt;
  std::string subject;
  int epochs_completed = 0;
  int total_epochs = 0;
  std::string scheduler;  // LrScheduler::serialize()
  std::int64_t optimizer_steps = 0;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::vector<EpochRecord> history;
  int best_epoch = 0;  // 0: none yet
  std::map<std::string, Tensor> weights;       // every parameter, qualified name
  std::map<std::string, Tensor> best_weights;  // trainable parameters at best_epoch
  std::map<std::string, Tensor> optimizer;     // "<param>/m", "<param>/v"
};

void save_checkpoint(const std::filesystem::path& path, const CheckpointState& state);
CheckpointState load_checkpoint(const std::filesystem::path& path);

struct StageReport {
  StageId stage = StageId::kSelectiveFt;
  std::string subject;
  int epochs = 0;
  int epochs_completed = 0;
  bool completed = false;
  std::int64_t optimizer_steps = 0;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  std::optional<Metrics> best;
  std::vector<std::string> trainable;
  std::vector<std::string> frozen;
  std::uint64_t seed = 0;
  std::string config_digest;

  nlohmann::json to_json() const;
  static StageReport from_json(const nlohmann::json& j);
};

struct StageProgress {
  StageId stage;
  std::string subject;
  int epochs_completed;
};

struct StageOptions {
  std::string subject = "model";
  // When set: last.ckpt after every epoch, then best.ckpt and report.json.
  std::filesystem::path out_dir;
  std::string config_digest;
  std::optional<std::filesystem::path> resume;
  // Called after each epoch's checkpoint; returning true stops the stage.
  std::function<bool(const StageProgress&)> should_stop;
};

// Trains the groups the stage's freeze policy allows. SELECTIVE_FT and
// COMPREHENSIVE_FT expect one adapter with its head attached; FUSION_TRAIN
// expects the fusion head. Frozen parameters are snapshotted at the start and
// must be bitwise unchanged at the end. The best validation epoch (earliest
// on ties) is restored into the model when the stage completes.
StageReport run_stage(const StageConfig& config, const ModelComponents& components, const DataLoader& train,
                      const DataLoader* val, const StageOptions& options = {});

// Logits of the model a stage trains, without caching activations.
Tensor stage_logits(const ModelComponents& components, FreezeMode mode, const Tensor& pixels);

}  // namespace hdff
