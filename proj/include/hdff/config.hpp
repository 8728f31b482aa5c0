// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hdff/augment.hpp"
#include "hdff/backbone.hpp"
#include "hdff/stage.hpp"

namespace hdff {

struct RunConfig {
  // [registry]
  std::vector<std::string> backbones;
  std::map<std::string, std::string> weights;  // name -> "random" | "pretrained-imagenet" | path
  std::map<std::string, std::int64_t> declared_params;
  std::int64_t budget_limit = 200'000'000;
  std::int64_t bytes_per_param = 4;
  std::int64_t byte_limit = 0;
  int num_classes = 2;

  // [data]; optional for budget-only configs.
  bool has_data = false;
  std::filesystem::path manifest;
  int input_size = 224;
  std::string policy = "imagenet";  // "imagenet", "none" or a policy file path
  std::uint64_t seed = 0;
  int workers = 1;

  // [pipeline] and [stage.*]
  std::vector<StageId> stage_order = canonical_stages();
  std::map<StageId, StageConfig> stages;

  // [output]
  std::filesystem::path run_dir;

  bool operator==(const RunConfig&) const = default;

  const StageConfig& stage(StageId s) const;
  WeightsRef weights_for(const std::string& backbone) const;
  AugmentationPolicy load_augmentation_policy() const;
};

// Parses and validates. Syntax errors carry a line number; semantic errors
// are collected and reported together in one ConfigError. HDFF_RUN_DIR, when
// set, overrides the output directory.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir,
                            const std::string& origin = "<config>", const std::string& default_run_name = "run");

// Canonical TOML with every default materialized. Re-parsing yields an
// identical RunConfig.
std::string to_toml(const RunConfig& config);

// Canonical "section.key = value" lines; the digest is a hash of these.
std::vector<std::string> config_preimage(const RunConfig& config);
std::string config_digest(const RunConfig& config);

// Stage settings with the stage's seed fanned out from the data seed.
StageConfig resolved_stage(const RunConfig& config, StageId stage, const std::string& subject);

}  // namespace hdff
