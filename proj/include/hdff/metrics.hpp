// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <span>

#include <nlohmann/json.hpp>

#include "hdff/dataset.hpp"
#include "hdff/tensor.hpp"

namespace hdff {

struct Metrics {
  double accuracy = 0.0;
  std::optional<double> auc;  // undefined when only one class is present
  double mean_loss = 0.0;
  std::int64_t n = 0;
  std::int64_t correct = 0;

  bool operator==(const Metrics&) const = default;
};

nlohmann::json to_json(const Metrics& m);
Metrics metrics_from_json(const nlohmann::json& j);

// Index of the largest logit; ties go to the lower class index.
int argmax_row(std::span<const Real> row);

// Mann-Whitney AUC of `scores` for positives (label == 1) vs the rest,
// with tied scores counted as one half. nullopt if either side is empty.
std::optional<double> roc_auc(std::span<const Real> scores, std::span<const int> labels);

// Accumulates logits batch by batch.
class MetricsAccumulator {
 public:
  void add(const Tensor& logits, std::span<const int> labels);
  Metrics finish() const;

 private:
  std::int64_t n_ = 0, correct_ = 0;
  double loss_sum_ = 0.0;
  std::vector<Real> scores_;
  std::vector<int> labels_;
};

using LogitsFn = std::function<Tensor(const Tensor& pixels)>;

// Runs the model over every batch of a non-augmenting loader of labeled
// samples.
Metrics evaluate(const DataLoader& loader, const LogitsFn& logits);

}  // namespace hdff
