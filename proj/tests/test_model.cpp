// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "hdff/fusion.hpp"
#include "hdff/metrics.hpp"
#include "hdff/optim.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace hdff {
namespace {

using testing::mock_adapter;
using testing::random_tensor;
using testing::TempDir;

TEST(Cosine, Examples) {
  CosineSchedule s{1e-3, 0.0, 100, 0};
  EXPECT_DOUBLE_EQ(cosine_lr(s), 1e-3);
  s.t_cur = 100;
  EXPECT_NEAR(cosine_lr(s), 0.0, 1e-18);
  s.t_cur = 50;
  EXPECT_NEAR(cosine_lr(s), 5e-4, 1e-15);
  s.t_cur = 150;  // clamped past the end
  EXPECT_NEAR(cosine_lr(s), 0.0, 1e-18);
  s.t_max = 0;
  EXPECT_THROW(cosine_lr(s), ConfigError);
}

TEST(Cosine, MonotoneAndBounded) {
  CosineSchedule s{0.1, 0.01, 37, 0};
  double prev = cosine_lr(s);
  for (s.t_cur = 1; s.t_cur <= 37; ++s.t_cur) {
    const double v = cosine_lr(s);
    EXPECT_LE(v, prev);
    EXPECT_GE(v, 0.01 - 1e-15);
    prev = v;
  }
}

TEST(Step, Examples) {
  const StepSchedule s{1e-3, 0.1, 30};
  EXPECT_DOUBLE_EQ(step_lr(s, 0), 1e-3);
  EXPECT_DOUBLE_EQ(step_lr(s, 29), 1e-3);
  EXPECT_NEAR(step_lr(s, 30), 1e-4, 1e-18);
  EXPECT_NEAR(step_lr(s, 90), 1e-6, 1e-20);
  for (int t = 1; t < 200; ++t) EXPECT_LE(step_lr(s, t), step_lr(s, t - 1));
}

TEST(Scheduler, RoundTripKeepsFutureRates) {
  ScheduleConfig c;
  c.t_max = 80;
  LrScheduler s(c, 1e-3, 80);
  s.set_position(37);
  const LrScheduler back = LrScheduler::deserialize(s.serialize());
  for (std::int64_t t = 38; t <= 80; ++t) EXPECT_NEAR(back.lr_at(t), s.lr_at(t), 1e-15);
  EXPECT_EQ(back.position(), 37);

  ScheduleConfig st;
  st.kind = ScheduleKind::kStep;
  st.step_size = 3;
  st.gamma = 0.5;
  LrScheduler a(st, 0.2, 10);
  const LrScheduler b = LrScheduler::deserialize(a.serialize());
  for (std::int64_t t = 0; t < 20; ++t) EXPECT_EQ(a.lr_at(t), b.lr_at(t));

  const std::string blob = s.serialize();
  EXPECT_THROW(LrScheduler::deserialize(blob.substr(0, blob.size() / 2)), FormatError);
  EXPECT_THROW(LrScheduler::deserialize(""), FormatError);
}

TEST(Scheduler, StageLengthDefaultsTmax) {
  LrScheduler s(ScheduleConfig{}, 1.0, 4);
  EXPECT_DOUBLE_EQ(s.lr_at(0), 1.0);
  EXPECT_NEAR(s.lr_at(2), 0.5, 1e-15);
  EXPECT_NEAR(s.lr_at(4), 0.0, 1e-15);
}

TEST(AdamW, MatchesReferenceUpdate) {
  // Two steps computed by hand with the decoupled-decay update.
  Parameter p;
  p.name = "w";
  p.value = Tensor({1}, 1.0);
  p.grad = Tensor({1}, 0.5);
  OptimizerConfig c{0.1, 0.01, 0.9, 0.999, 1e-8};
  AdamW opt(c);
  NamedParams params = {{"w", &p}};
  double w = 1.0, m = 0, v = 0;
  for (int t = 1; t <= 2; ++t) {
    opt.step(params, 0.1);
    const double g = 0.5;
    w *= 1 - 0.1 * 0.01;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1 - std::pow(0.9, t)), vhat = v / (1 - std::pow(0.999, t));
    w -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    EXPECT_NEAR(p.value[0], w, 1e-12);
  }
}

TEST(AdamW, StateExportImportContinuesIdentically) {
  Rng rng(1);
  Parameter p("w", {3});
  p.value = random_tensor({3}, rng);
  p.grad = random_tensor({3}, rng);
  Parameter q = p;
  AdamW a, b;
  NamedParams pa = {{"w", &p}}, pb = {{"w", &q}};
  a.step(pa, 1e-2);
  b.step(pb, 1e-2);
  Archive arc;
  a.export_state(arc, "opt/");
  AdamW c;
  c.import_state(arc, "opt/", a.steps());
  NamedParams pc = {{"w", &q}};
  a.step(pa, 1e-2);
  c.step(pc, 1e-2);
  EXPECT_TRUE(p.value.bitwise_equal(q.value));
}

std::vector<BackboneAdapter> four_mocks() {
  std::vector<BackboneAdapter> v;
  std::uint64_t s = 1;
  for (const char* n : {"mock_tiny", "mock_small", "mock_narrow", "mock_mixer"}) v.push_back(mock_adapter(n, s++));
  return v;
}

TEST(Fusion, LayoutOfMockDims) {
  const auto adapters = four_mocks();
  const auto layout = fusion_layout(adapters);
  ASSERT_EQ(layout.size(), 4u);
  const std::int64_t offsets[] = {0, 16, 48, 56}, widths[] = {16, 32, 8, 16};
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(layout[i].offset, offsets[i]);
    EXPECT_EQ(layout[i].width, widths[i]);
  }
}

TEST(Fusion, BlocksMatchPerAdapterExtractionAndPermute) {
  auto adapters = four_mocks();
  Rng rng(3);
  const Tensor px = random_tensor({3, 3, 32, 32}, rng);
  const FusedFeature f = extract_fused(adapters, px);
  EXPECT_EQ(f.width(), 72);
  for (std::size_t k = 0; k < adapters.size(); ++k) {
    const Tensor own = adapters[k].extract_features(px);
    for (std::int64_t n = 0; n < 3; ++n)
      for (std::int64_t j = 0; j < own.dim(1); ++j)
        EXPECT_EQ(f.values.at(n, f.layout[k].offset + j), own.at(n, j));
  }
  std::swap(adapters[0], adapters[2]);
  const FusedFeature g = extract_fused(adapters, px);
  EXPECT_EQ(g.layout[0].name, "mock_narrow");
  for (std::int64_t n = 0; n < 3; ++n) {
    for (std::int64_t j = 0; j < 8; ++j) EXPECT_EQ(g.values.at(n, j), f.values.at(n, 48 + j));
    for (std::int64_t j = 0; j < 16; ++j) EXPECT_EQ(g.values.at(n, 40 + j), f.values.at(n, j));
  }
  std::vector<BackboneAdapter> one = {adapters[1]};
  const FusedFeature h = extract_fused(one, px);
  EXPECT_TRUE(h.values.bitwise_equal(one[0].extract_features(px)));
}

TEST(Fusion, WrongInputSizeRejected) {
  auto adapters = four_mocks();
  EXPECT_THROW(extract_fused(adapters, Tensor({1, 3, 16, 16})), Error);
}

TEST(FusionHead, ForwardExamples) {
  FusionHead h(4, 2);
  h.layer().bias().value = Tensor({2}, std::vector<Real>{0.3, -0.3});
  const Tensor logits = h.forward(Tensor({3, 4}, 0.7));
  for (int n = 0; n < 3; ++n) {
    EXPECT_DOUBLE_EQ(logits.at(n, 0), 0.3);
    EXPECT_DOUBLE_EQ(logits.at(n, 1), -0.3);
  }
  FusionHead id(2, 2);
  Rng rng(2);
  id.init(rng);
  const Tensor w = id.layer().weight().value;  // stored C×D
  const Tensor out = id.forward(Tensor({1, 2}, std::vector<Real>{1.0, 0.0}));
  EXPECT_DOUBLE_EQ(out.at(0, 0), w.at(0, 0) + id.layer().bias().value[0]);
  EXPECT_DOUBLE_EQ(out.at(0, 1), w.at(1, 0) + id.layer().bias().value[1]);
  EXPECT_THROW(id.forward(Tensor({1, 3})), Error);
}

TEST(FusionHead, InitIsZeroBiasScaledUniform) {
  FusionHead h(64, 2);
  Rng rng(5);
  h.init(rng);
  for (double b : h.layer().bias().value.values()) EXPECT_EQ(b, 0.0);
  for (double w : h.layer().weight().value.values()) EXPECT_LE(std::abs(w), 1.0 / 8.0);
}

TEST(FusionHead, BlockLocality) {
  Rng rng(6);
  FusionHead h(10, 2);
  h.init(rng);
  Tensor x = random_tensor({2, 10}, rng);
  const Tensor full = h.forward(x);
  Tensor zeroed = x;
  for (int n = 0; n < 2; ++n)
    for (int j = 4; j < 7; ++j) zeroed.at(n, j) = 0.0;
  const Tensor part = h.forward(zeroed);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 2; ++c) {
      double contrib = 0;
      for (int j = 4; j < 7; ++j) contrib += x.at(n, j) * h.layer().weight().value.at(c, j);
      EXPECT_NEAR(full.at(n, c) - part.at(n, c), contrib, 1e-12);
    }
}

TEST(Freeze, PoliciesSelectExpectedGroups) {
  auto adapters = four_mocks();
  Rng rng(1);
  for (auto& a : adapters) a.attach_head(2, rng);
  FusionHead head(72, 2);
  ModelComponents c;
  for (auto& a : adapters) c.adapters.push_back(&a);
  c.fusion = &head;

  const auto fusion_only = apply_freeze(c, FreezeMode::kFusionOnly);
  EXPECT_EQ(fusion_only.trainable, std::set<std::string>{"fusion_head"});
  EXPECT_EQ(fusion_only.frozen.size(), 8u);

  ModelComponents subs;
  for (auto& a : adapters) subs.adapters.push_back(&a);
  const auto head_only = apply_freeze(subs, FreezeMode::kHeadOnly);
  EXPECT_EQ(head_only.trainable,
            (std::set<std::string>{"mock_tiny.head", "mock_small.head", "mock_narrow.head", "mock_mixer.head"}));
  EXPECT_TRUE(apply_freeze(subs, FreezeMode::kFull).frozen.empty());
  EXPECT_THROW(collect_params(c, {"nope.body"}), Error);
}

TEST(Predict, ProbabilityContract) {
  const auto p = fake_probability(Tensor({3, 2}, std::vector<Real>{0, 0, -800, 800, 800, -800}));
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_NEAR(p[1], 1.0, 1e-6);
  EXPECT_NEAR(p[2], 0.0, 1e-6);
  for (double v : p) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(fake_probability(Tensor({1, 3})), Error);
}

TEST(GrandModel, SaveLoadAndWidthInvariant) {
  TempDir dir("grand");
  auto adapters = four_mocks();
  FusionHead head(72, 2);
  Rng rng(1);
  head.init(rng);
  GrandModel m(adapters, head);
  m.save(dir / "g");
  GrandModel back = GrandModel::load(dir / "g");
  const Tensor px = random_tensor({2, 3, 32, 32}, rng);
  EXPECT_TRUE(back.logits(px).bitwise_equal(m.logits(px)));
  EXPECT_THROW(GrandModel(adapters, FusionHead(71, 2)), FormatError);

  // A fusion-head file whose width disagrees with the backbones is refused.
  save_archive(dir / "g" / "fusion_head.hdffw", FusionHead(70, 2).to_archive());
  EXPECT_THROW(GrandModel::load(dir / "g"), FormatError);
}

TEST(Metrics, AccuracyExamples) {
  MetricsAccumulator all;
  all.add(Tensor({2, 2}, std::vector<Real>{1, 0, 0, 1}), std::vector<int>{0, 1});
  EXPECT_DOUBLE_EQ(all.finish().accuracy, 1.0);
  MetricsAccumulator three;
  three.add(Tensor({4, 2}, std::vector<Real>{1, 0, 0, 1, 1, 0, 1, 0}), std::vector<int>{0, 1, 0, 1});
  EXPECT_DOUBLE_EQ(three.finish().accuracy, 0.75);
  EXPECT_EQ(three.finish().correct, 3);
  EXPECT_EQ(argmax_row(std::vector<Real>{2.0, 2.0}), 0);  // ties toward the lower index
}

TEST(Metrics, AucExamplesAndTies) {
  const std::vector<Real> s = {0.9, 0.8, 0.3, 0.1};
  const std::vector<int> y = {1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(*roc_auc(s, y), 1.0);
  const std::vector<Real> tied = {0.5, 0.5};
  EXPECT_DOUBLE_EQ(*roc_auc(tied, std::vector<int>{1, 0}), 0.5);
  EXPECT_FALSE(roc_auc(s, std::vector<int>{1, 1, 1, 1}).has_value());
}

TEST(Metrics, AucMatchesPairwiseOracleWithTies) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(199));
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) {
      scores.push_back(std::floor(rng.uniform(0.0, 5.0)) / 5.0);  // heavy ties
      labels.push_back(i < 2 ? i : static_cast<int>(rng.below(2)));
    }
    EXPECT_NEAR(*roc_auc(scores, labels), testing::pairwise_auc(scores, labels), 1e-12);
  }
}

TEST(Metrics, JsonRoundTrip) {
  Metrics m{0.5, 0.75, 0.3, 4, 2};
  EXPECT_EQ(metrics_from_json(to_json(m)), m);
  m.auc.reset();
  EXPECT_EQ(metrics_from_json(to_json(m)), m);
}

}  // namespace
}  // namespace hdff
