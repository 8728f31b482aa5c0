// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hdff/nn.hpp"

namespace hdff {

nlohmann::json to_json(const Metrics& m) {
  nlohmann::json j = {{"accuracy", m.accuracy}, {"mean_loss", m.mean_loss}, {"n", m.n}, {"correct", m.correct}};
  j["auc"] = m.auc ? nlohmann::json(*m.auc) : nlohmann::json(nullptr);
  return j;
}

Metrics metrics_from_json(const nlohmann::json& j) {
  Metrics m;
  m.accuracy = j.at("accuracy").get<double>();
  m.mean_loss = j.at("mean_loss").get<double>();
  m.n = j.at("n").get<std::int64_t>();
  m.correct = j.at("correct").get<std::int64_t>();
  if (!j.at("auc").is_null()) m.auc = j.at("auc").get<double>();
  return m;
}

int argmax_row(std::span<const Real> row) {
  int best = 0;
  for (std::size_t c = 1; c < row.size(); ++c)
    if (row[c] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  return best;
}

std::optional<double> roc_auc(std::span<const Real> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("roc_auc: size mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average 1-based ranks over tie groups; AUC = (R+ - n+(n+ + 1)/2) / (n+ n-).
  double rank_sum_pos = 0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (labels[idx[k]] == 1) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    i = j + 1;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

void MetricsAccumulator::add(const Tensor& logits, std::span<const int> labels) {
  const auto batch = logits.dim(0), classes = logits.dim(1);
  for (auto y : labels)
    if (y < 0) throw Error("evaluate: unlabeled sample in evaluation data");
  loss_sum_ += cross_entropy(logits, labels).mean_loss * static_cast<double>(batch);
  for (std::int64_t i = 0; i < batch; ++i) {
    std::span<const Real> row(logits.data() + i * classes, static_cast<std::size_t>(classes));
    const int y = labels[static_cast<std::size_t>(i)];
    if (argmax_row(row) == y) ++correct_;
    const auto p = softmax(row);
    scores_.push_back(classes > 1 ? p[1] : p[0]);
    labels_.push_back(y);
  }
  n_ += batch;
}

Metrics MetricsAccumulator::finish() const {
  if (n_ == 0) throw Error("evaluate: no samples");
  Metrics m;
  m.n = n_;
  m.correct = correct_;
  m.accuracy = static_cast<double>(correct_) / static_cast<double>(n_);
  m.mean_loss = loss_sum_ / static_cast<double>(n_);
  m.auc = roc_auc(scores_, labels_);
  return m;
}

Metrics evaluate(const DataLoader& loader, const LogitsFn& logits) {
  if (loader.num_records() == 0) throw Error("evaluate: empty loader");
  if (loader.options().augment) throw Error("evaluate: loader must not augment");
  MetricsAccumulator acc;
  for (std::size_t i = 0; i < loader.num_batches(); ++i) {
    const auto b = loader.batch(0, i);
    acc.add(logits(b.pixels), b.labels);
  }
  return acc.finish();
}

}  // namespace hdff
