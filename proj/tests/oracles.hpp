// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

// Reference computations written independently of the library code they
// check.

#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "hdff/backbone.hpp"
#include "hdff/dataset.hpp"

namespace hdff::testing {

// Closed-form ridge regression to +-1 targets, solved by Gauss-Jordan
// elimination. Returns weights with the bias last.
inline std::vector<double> fit_linear_probe(const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
  const std::size_t n = x.size(), d = x[0].size() + 1;
  std::vector<std::vector<double>> a(d, std::vector<double>(d + 1, 0.0));
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> row = x[s];
    row.push_back(1.0);
    const double t = y[s] ? 1.0 : -1.0;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) a[i][j] += row[i] * row[j];
      a[i][d] += row[i] * t;
    }
  }
  for (std::size_t i = 0; i < d; ++i) a[i][i] += 1e-6 * static_cast<double>(n);
  for (std::size_t c = 0; c < d; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < d; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    std::swap(a[c], a[p]);
    for (std::size_t r = 0; r < d; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= d; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> w(d);
  for (std::size_t i = 0; i < d; ++i) w[i] = a[i][d] / a[i][i];
  return w;
}

inline double probe_accuracy(const std::vector<double>& w, const std::vector<std::vector<double>>& x,
                             const std::vector<int>& y) {
  int correct = 0;
  for (std::size_t s = 0; s < x.size(); ++s) {
    double v = w.back();
    for (std::size_t i = 0; i < x[s].size(); ++i) v += w[i] * x[s][i];
    correct += (v > 0) == (y[s] == 1);
  }
  return static_cast<double>(correct) / static_cast<double>(x.size());
}

// Frozen body features of every record, one row per sample.
inline void frozen_features(BackboneAdapter& a, const std::vector<ManifestRecord>& recs, int input_size,
                            std::vector<std::vector<double>>& x, std::vector<int>& y) {
  LoaderOptions lo;
  lo.input_size = input_size;
  lo.shuffle = false;
  lo.batch_size = 100;
  for (const auto& b : DataLoader(recs, lo).epoch_batches(0)) {
    const Tensor f = a.extract_features(b.pixels);
    for (std::int64_t i = 0; i < f.dim(0); ++i) {
      x.emplace_back(f.values().begin() + i * f.dim(1), f.values().begin() + (i + 1) * f.dim(1));
      y.push_back(b.labels[static_cast<std::size_t>(i)]);
    }
  }
}

// Mann-Whitney statistic by direct pair enumeration; ties count one half.
inline double pairwise_auc(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] == 1) continue;
      ++pairs;
      wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace hdff::testing
