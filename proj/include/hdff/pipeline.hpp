// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "hdff/config.hpp"
#include "hdff/trainer.hpp"

namespace hdff {

struct PipelineOptions {
  // Restrict the run to one stage and/or one backbone. Earlier stages must
  // already be complete in the run directory.
  std::optional<StageId> only_stage;
  std::optional<std::string> only_backbone;
  // Continue interrupted stages from their last.ckpt.
  bool resume = false;
  std::function<bool(const StageProgress&)> should_stop;
};

struct PipelineResult {
  std::filesystem::path run_dir;
  bool completed = false;  // false when stopped early or restricted
  std::map<std::string, Metrics> submodel_val;
  std::optional<Metrics> grand_val;
  std::optional<BudgetReport> budget;
  std::filesystem::path grand_model_dir;
  std::filesystem::path predictions;
  nlohmann::json summary;
};

// Run-directory layout:
//   config.resolved.toml
//   stages/<backbone>/{selective,full}/{last.ckpt,best.ckpt,report.json,model.hdffw}
//   stages/grand/fusion/{last.ckpt,best.ckpt,report.json}
//   budget.txt, grand_model/, predictions.csv, summary.json
PipelineResult run_pipeline(const RunConfig& config, const PipelineOptions& options = {});

// Budget of a set of backbones plus the fusion head they imply, with any
// declared extra rows from the config.
ParamBudget pipeline_budget(const RunConfig& config, const std::vector<BackboneAdapter>& adapters);
// Budget for `hdff budget`: instantiates each configured backbone.
BudgetReport config_budget(const RunConfig& config);

// `sample_id,probability` rows with ten decimals, in record order.
void write_predictions(GrandModel& model, const std::vector<ManifestRecord>& records, int workers,
                       const std::filesystem::path& out);

}  // namespace hdff
