// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hdff/archive.hpp"
#include "hdff/nn.hpp"

namespace hdff {

struct CosineSchedule {
  double eta_max = 1e-3;
  double eta_min = 0.0;
  std::int64_t t_max = 1;
  std::int64_t t_cur = 0;
};

// eta_min + (eta_max - eta_min)(1 + cos(pi * min(t_cur, t_max) / t_max)) / 2
double cosine_lr(const CosineSchedule& s);

struct StepSchedule {
  double eta_0 = 1e-3;
  double gamma = 0.1;
  std::int64_t step_size = 1;
};

// eta_0 * gamma^floor(t / step_size)
double step_lr(const StepSchedule& s, std::int64_t t);

enum class ScheduleKind { kCosine, kStep };
enum class StepUnit { kEpoch, kStep };

std::string to_string(ScheduleKind k);
std::string to_string(StepUnit u);
ScheduleKind parse_schedule_kind(const std::string& s);
StepUnit parse_step_unit(const std::string& s);

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::kCosine;
  double eta_min = 0.0;
  std::int64_t t_max = 0;  // 0: length of the stage in scheduler units
  double gamma = 0.1;
  std::int64_t step_size = 1;
  StepUnit unit = StepUnit::kEpoch;

  bool operator==(const ScheduleConfig&) const = default;
};

// Stateful learning-rate schedule advanced once per epoch or per optimizer
// step. A single cycle, no restarts.
class LrScheduler {
 public:
  LrScheduler() = default;
  LrScheduler(const ScheduleConfig& config, double base_lr, std::int64_t total_units);

  double lr() const;
  double lr_at(std::int64_t t) const;
  void advance() { ++position_; }
  std::int64_t position() const { return position_; }
  void set_position(std::int64_t p) { position_ = p; }
  ScheduleKind kind() const { return kind_; }
  StepUnit unit() const { return unit_; }

  std::string serialize() const;
  static LrScheduler deserialize(const std::string& blob);

  bool operator==(const LrScheduler&) const = default;

 private:
  ScheduleKind kind_ = ScheduleKind::kCosine;
  StepUnit unit_ = StepUnit::kEpoch;
  CosineSchedule cosine_;
  StepSchedule step_;
  std::int64_t position_ = 0;
};

struct OptimizerConfig {
  double lr = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const OptimizerConfig&) const = default;
};

using NamedParams = std::vector<std::pair<std::string, Parameter*>>;

// Adam with decoupled weight decay. Moment state is keyed by parameter name
// and created lazily, so it only ever exists for trainable parameters.
class AdamW {
 public:
  explicit AdamW(OptimizerConfig config = {}) : config_(config) {}

  void step(const NamedParams& params, double lr);
  std::int64_t steps() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }

  // Moment tensors under "<name>/m" and "<name>/v".
  void export_state(Archive& into, const std::string& prefix) const;
  void import_state(const Archive& from, const std::string& prefix, std::int64_t steps);

 private:
  struct Moments {
    Tensor m, v;
  };
  OptimizerConfig config_;
  std::int64_t steps_ = 0;
  std::map<std::string, Moments> state_;
};

void zero_grads(const NamedParams& params);

}  // namespace hdff
