// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hdff/config.hpp"
#include "hdff/metrics.hpp"

namespace hdff {

struct AblationResult {
  std::string variant;
  std::vector<Metrics> per_epoch;  // validation metrics, all stages in order
  std::vector<double> lr_trace;    // learning rate at the start of each epoch
  Metrics final;
  std::vector<std::uint64_t> seeds;
  std::string config_digest;
  std::vector<std::string> preimage;
};

nlohmann::json to_json(const AblationResult& r);

struct ReferenceRow {
  std::string variant;
  double accuracy = 0.0;
};

struct AblationReport {
  std::string axis;
  std::vector<AblationResult> results;
  // Published numbers from a private dataset; recorded, never a target.
  std::vector<ReferenceRow> reference;
  std::string reference_note;
  // Config keys whose values differ between variants.
  std::vector<std::string> varied_keys;
  std::vector<std::string> flags;

  const AblationResult& result(const std::string& variant) const;
  nlohmann::json to_json() const;
  std::string table() const;
};

// Trains the first configured backbone through SELECTIVE_FT and
// COMPREHENSIVE_FT twice, once per schedule kind.
AblationReport ablate_scheduler(const RunConfig& base);

// Variant head_only runs SELECTIVE_FT alone (COMPREHENSIVE_FT with zero
// epochs); full_ft runs both stages. Flags "no gap" when the accuracy
// difference is below `no_gap_threshold`.
AblationReport ablate_finetune_depth(const RunConfig& base, double no_gap_threshold = 0.02);

// Keys ("table.key") whose canonical lines differ between the configs.
std::vector<std::string> differing_keys(const RunConfig& a, const RunConfig& b);

// <dir>/<axis>.json (machine-readable) and <dir>/<axis>.txt (table).
void write_report(const AblationReport& report, const std::filesystem::path& dir);

}  // namespace hdff
