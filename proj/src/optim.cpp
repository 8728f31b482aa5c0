// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

namespace hdff {

double cosine_lr(const CosineSchedule& s) {
  if (s.t_max <= 0) throw ConfigError("cosine schedule requires t_max >= 1");
  if (s.t_cur < 0) throw ConfigError("cosine schedule position must be >= 0");
  const double t = static_cast<double>(std::min(s.t_cur, s.t_max));
  return s.eta_min +
         0.5 * (s.eta_max - s.eta_min) * (1.0 + std::cos(std::numbers::pi * t / static_cast<double>(s.t_max)));
}

double step_lr(const StepSchedule& s, std::int64_t t) {
  if (s.step_size <= 0) throw ConfigError("step schedule requires step_size >= 1");
  if (t < 0) throw ConfigError("step schedule position must be >= 0");
  return s.eta_0 * std::pow(s.gamma, static_cast<double>(t / s.step_size));
}

std::string to_string(ScheduleKind k) { return k == ScheduleKind::kCosine ? "cosine" : "step"; }
std::string to_string(StepUnit u) { return u == StepUnit::kEpoch ? "epoch" : "step"; }

ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "cosine") return ScheduleKind::kCosine;
  if (s == "step") return ScheduleKind::kStep;
  throw ConfigError("unknown scheduler '" + s + "' (expected \"cosine\" or \"step\")");
}

StepUnit parse_step_unit(const std::string& s) {
  if (s == "epoch") return StepUnit::kEpoch;
  if (s == "step") return StepUnit::kStep;
  throw ConfigError("unknown schedule unit '" + s + "' (expected \"epoch\" or \"step\")");
}

LrScheduler::LrScheduler(const ScheduleConfig& config, double base_lr, std::int64_t total_units)
    : kind_(config.kind), unit_(config.unit) {
  cosine_ = {base_lr, config.eta_min, config.t_max > 0 ? config.t_max : std::max<std::int64_t>(total_units, 1), 0};
  step_ = {base_lr, config.gamma, config.step_size};
  if (kind_ == ScheduleKind::kStep && step_.step_size <= 0) throw ConfigError("step_size must be >= 1");
}

double LrScheduler::lr_at(std::int64_t t) const {
  if (kind_ == ScheduleKind::kCosine) {
    CosineSchedule s = cosine_;
    s.t_cur = t;
    return cosine_lr(s);
  }
  return step_lr(step_, t);
}

double LrScheduler::lr() const { return lr_at(position_); }

std::string LrScheduler::serialize() const {
  nlohmann::json j = {{"version", 1},
                      {"kind", to_string(kind_)},
                      {"unit", to_string(unit_)},
                      {"eta_max", cosine_.eta_max},
                      {"eta_min", cosine_.eta_min},
                      {"t_max", cosine_.t_max},
                      {"eta_0", step_.eta_0},
                      {"gamma", step_.gamma},
                      {"step_size", step_.step_size},
                      {"position", position_}};
  return j.dump();
}

LrScheduler LrScheduler::deserialize(const std::string& blob) {
  LrScheduler s;
  try {
    const auto j = nlohmann::json::parse(blob);
    if (j.at("version").get<int>() != 1) throw FormatError("unsupported scheduler state version");
    s.kind_ = parse_schedule_kind(j.at("kind").get<std::string>());
    s.unit_ = parse_step_unit(j.at("unit").get<std::string>());
    s.cosine_.eta_max = j.at("eta_max").get<double>();
    s.cosine_.eta_min = j.at("eta_min").get<double>();
    s.cosine_.t_max = j.at("t_max").get<std::int64_t>();
    s.step_.eta_0 = j.at("eta_0").get<double>();
    s.step_.gamma = j.at("gamma").get<double>();
    s.step_.step_size = j.at("step_size").get<std::int64_t>();
    s.position_ = j.at("position").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupted scheduler state: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("corrupted scheduler state: ") + e.what());
  }
  if (s.cosine_.t_max <= 0 || s.step_.step_size <= 0 || s.position_ < 0)
    throw FormatError("corrupted scheduler state: invalid values");
  return s;
}

void AdamW::step(const NamedParams& params, double lr) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  const double bc2_sqrt = std::sqrt(bc2);
  for (const auto& [name, p] : params) {
    auto it = state_.find(name);
    if (it == state_.end()) it = state_.emplace(name, Moments{Tensor(p->value.shape()), Tensor(p->value.shape())}).first;
    auto& [m, v] = it->second;
    Real* w = p->value.data();
    const Real* g = p->grad.data();
    for (std::int64_t i = 0; i < p->value.size(); ++i) {
      w[i] *= 1.0 - lr * config_.weight_decay;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double denom = std::sqrt(v[i]) / bc2_sqrt + config_.eps;
      w[i] -= (lr / bc1) * m[i] / denom;
    }
  }
}

void AdamW::export_state(Archive& into, const std::string& prefix) const {
  for (const auto& [name, mom] : state_) {
    into.tensors[prefix + name + "/m"] = mom.m;
    into.tensors[prefix + name + "/v"] = mom.v;
  }
}

void AdamW::import_state(const Archive& from, const std::string& prefix, std::int64_t steps) {
  state_.clear();
  steps_ = steps;
  for (const auto& [key, t] : from.tensors) {
    if (key.rfind(prefix, 0) != 0 || key.size() < 2 || key.compare(key.size() - 2, 2, "/m") != 0) continue;
    const auto name = key.substr(prefix.size(), key.size() - prefix.size() - 2);
    state_[name] = Moments{t, from.tensor(prefix + name + "/v")};
  }
}

void zero_grads(const NamedParams& params) {
  for (const auto& [_, p] : params) p->zero_grad();
}

}  // namespace hdff
