// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include <limits>

#include <gtest/gtest.h>

#include "hdff/archive.hpp"
#include "hdff/trainer.hpp"
#include "test_util.hpp"

namespace hdff {
namespace {

using testing::mock_adapter;
using testing::TempDir;

class TrainerTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new TempDir("trainer_data");
    SynthOptions o;
    o.train = 48;
    o.val = 16;
    o.test = 0;
    o.size = 32;
    o.seed = 5;
    const auto recs = write_synth_dataset(o, data_->path());
    train_ = new std::vector<ManifestRecord>(select_split(recs, Split::kTrain));
    val_ = new std::vector<ManifestRecord>(select_split(recs, Split::kVal));
  }
  static void TearDownTestSuite() {
    delete train_;
    delete val_;
    delete data_;
  }

  DataLoader train_loader(std::uint64_t seed = 3) const {
    LoaderOptions o;
    o.batch_size = 8;
    o.input_size = 32;
    o.shuffle_seed = seed;
    return DataLoader(*train_, o, cache_);
  }
  DataLoader val_loader() const {
    LoaderOptions o;
    o.batch_size = 16;
    o.input_size = 32;
    o.shuffle = false;
    return DataLoader(*val_, o, cache_);
  }
  static StageConfig stage(StageId s, int epochs, double lr) {
    StageConfig c = default_stage_config(s);
    c.epochs = epochs;
    c.optimizer.lr = lr;
    return c;
  }
  static BackboneAdapter with_head(const std::string& name, std::uint64_t seed) {
    BackboneAdapter a = mock_adapter(name, seed);
    Rng rng(seed + 100);
    a.attach_head(2, rng);
    return a;
  }

  static TempDir* data_;
  static std::vector<ManifestRecord>* train_;
  static std::vector<ManifestRecord>* val_;
  std::shared_ptr<ImageCache> cache_ = std::make_shared<ImageCache>();
};

TempDir* TrainerTest::data_ = nullptr;
std::vector<ManifestRecord>* TrainerTest::train_ = nullptr;
std::vector<ManifestRecord>* TrainerTest::val_ = nullptr;

TEST_F(TrainerTest, SelectiveOnlyChangesHead) {
  BackboneAdapter a = with_head("mock_tiny", 1);
  const BackboneAdapter before = a;
  ModelComponents c;
  c.adapters = {&a};
  const auto train = train_loader(), val = val_loader();
  const StageReport r = run_stage(stage(StageId::kSelectiveFt, 2, 1e-2), c, train, &val);
  EXPECT_TRUE(r.completed);
  EXPECT_EQ(r.optimizer_steps, 2 * 6);
  EXPECT_EQ(r.trainable, std::vector<std::string>{"mock_tiny.head"});
  const auto pb = before.body().parameters();
  const auto pa = a.body().parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(pa[i]->value.bitwise_equal(pb[i]->value));
  EXPECT_FALSE(a.head().weight().value.bitwise_equal(before.head().weight().value));
}

TEST_F(TrainerTest, FusionKeepsSubModelBlobsBitwise) {
  std::vector<BackboneAdapter> adapters;
  std::uint64_t s = 1;
  for (const char* n : {"mock_tiny", "mock_small", "mock_narrow", "mock_mixer"}) adapters.push_back(mock_adapter(n, s++));
  std::vector<std::string> blobs;
  for (const auto& a : adapters) blobs.push_back(encode_archive(a.to_archive()));
  FusionHead head(72, 2);
  Rng rng(4);
  head.init(rng);
  const Tensor w0 = head.layer().weight().value;
  ModelComponents c;
  for (auto& a : adapters) c.adapters.push_back(&a);
  c.fusion = &head;
  const auto train = train_loader(), val = val_loader();
  const StageReport r = run_stage(stage(StageId::kFusionTrain, 1, 1e-2), c, train, &val);
  EXPECT_EQ(r.trainable, std::vector<std::string>{"fusion_head"});
  for (std::size_t i = 0; i < adapters.size(); ++i) EXPECT_EQ(encode_archive(adapters[i].to_archive()), blobs[i]);
  EXPECT_FALSE(head.layer().weight().value.bitwise_equal(w0));
}

TEST_F(TrainerTest, ZeroEpochStageMakesNoUpdates) {
  BackboneAdapter a = with_head("mock_tiny", 2);
  const std::string blob = encode_archive(a.to_archive());
  ModelComponents c;
  c.adapters = {&a};
  const auto train = train_loader();
  const StageReport r = run_stage(stage(StageId::kComprehensiveFt, 0, 1e-3), c, train, nullptr);
  EXPECT_TRUE(r.completed);
  EXPECT_EQ(r.optimizer_steps, 0);
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(encode_archive(a.to_archive()), blob);
}

TEST_F(TrainerTest, FreezeBindingEnforced) {
  BackboneAdapter a = with_head("mock_tiny", 2);
  ModelComponents c;
  c.adapters = {&a};
  StageConfig bad = stage(StageId::kSelectiveFt, 1, 1e-3);
  bad.freeze = FreezeMode::kFull;
  const auto train = train_loader();
  EXPECT_THROW(run_stage(bad, c, train, nullptr), ConfigError);
  EXPECT_THROW(run_stage(stage(StageId::kFusionTrain, 1, 1e-3), c, train, nullptr), Error);
}

TEST_F(TrainerTest, FrozenDriftIsAHardFailure) {
  BackboneAdapter a = with_head("mock_tiny", 3);
  ModelComponents c;
  c.adapters = {&a};
  StageOptions o;
  o.should_stop = [&](const StageProgress&) {
    a.body().parameters()[0]->value[0] += 1e-9;  // sabotage a frozen weight
    return false;
  };
  const auto train = train_loader();
  EXPECT_THROW(run_stage(stage(StageId::kSelectiveFt, 2, 1e-3), c, train, nullptr, o), InvariantError);
}

TEST_F(TrainerTest, NonFiniteLossAborts) {
  BackboneAdapter a = with_head("mock_tiny", 3);
  a.head().weight().value[0] = std::numeric_limits<double>::quiet_NaN();
  ModelComponents c;
  c.adapters = {&a};
  const auto train = train_loader();
  try {
    run_stage(stage(StageId::kSelectiveFt, 1, 1e-3), c, train, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite loss"), std::string::npos);
  }
}

TEST_F(TrainerTest, BestEpochIsEarliestMaximum) {
  BackboneAdapter a = with_head("mock_small", 4);
  ModelComponents c;
  c.adapters = {&a};
  const auto train = train_loader(), val = val_loader();
  const StageReport r = run_stage(stage(StageId::kComprehensiveFt, 5, 3e-3), c, train, &val);
  ASSERT_GE(r.best_epoch, 1);
  const double best = r.history[static_cast<std::size_t>(r.best_epoch - 1)].val->accuracy;
  for (const auto& h : r.history) {
    EXPECT_LE(h.val->accuracy, best);
    if (h.epoch < r.best_epoch) EXPECT_LT(h.val->accuracy, best);
  }
  // The restored weights are the best epoch's.
  const Metrics now = evaluate(val, [&](const Tensor& px) { return stage_logits(c, FreezeMode::kFull, px); });
  EXPECT_DOUBLE_EQ(now.accuracy, best);
}

TEST_F(TrainerTest, ResumeEqualsUninterruptedBitwise) {
  TempDir out("resume");
  const auto train = train_loader(), val = val_loader();
  const StageConfig cfg = stage(StageId::kComprehensiveFt, 4, 2e-3);

  BackboneAdapter straight = with_head("mock_tiny", 6);
  ModelComponents cs;
  cs.adapters = {&straight};
  const StageReport rs = run_stage(cfg, cs, train, &val, {.subject = "mock_tiny", .out_dir = out / "a"});

  BackboneAdapter part = with_head("mock_tiny", 6);
  ModelComponents cp;
  cp.adapters = {&part};
  StageOptions o{.subject = "mock_tiny", .out_dir = out / "b"};
  o.should_stop = [](const StageProgress& p) { return p.epochs_completed == 3; };
  const StageReport stopped = run_stage(cfg, cp, train, &val, o);
  EXPECT_FALSE(stopped.completed);
  EXPECT_EQ(stopped.epochs_completed, 3);

  BackboneAdapter resumed = with_head("mock_tiny", 99);  // different weights, overwritten by the checkpoint
  ModelComponents cr;
  cr.adapters = {&resumed};
  StageOptions ro{.subject = "mock_tiny", .out_dir = out / "b"};
  ro.resume = out / "b" / "last.ckpt";
  const StageReport rr = run_stage(cfg, cr, train, &val, ro);
  EXPECT_TRUE(rr.completed);
  EXPECT_EQ(encode_archive(resumed.to_archive()), encode_archive(straight.to_archive()));
  EXPECT_EQ(rr.to_json(), rs.to_json());
  EXPECT_EQ(read_file(out / "a" / "best.ckpt"), read_file(out / "b" / "best.ckpt"));
}

TEST_F(TrainerTest, CheckpointErrors) {
  TempDir out("ckpt");
  BackboneAdapter a = with_head("mock_tiny", 6);
  ModelComponents c;
  c.adapters = {&a};
  const auto train = train_loader();
  StageOptions missing{.subject = "mock_tiny"};
  missing.resume = out / "nope.ckpt";
  EXPECT_THROW(run_stage(stage(StageId::kSelectiveFt, 1, 1e-3), c, train, nullptr, missing), Error);

  run_stage(stage(StageId::kSelectiveFt, 1, 1e-3), c, train, nullptr, {.subject = "mock_tiny", .out_dir = out.path()});
  StageOptions wrong_stage{.subject = "mock_tiny"};
  wrong_stage.resume = out / "last.ckpt";
  EXPECT_THROW(run_stage(stage(StageId::kComprehensiveFt, 1, 1e-3), c, train, nullptr, wrong_stage), Error);
  StageOptions wrong_subject{.subject = "other"};
  wrong_subject.resume = out / "last.ckpt";
  EXPECT_THROW(run_stage(stage(StageId::kSelectiveFt, 1, 1e-3), c, train, nullptr, wrong_subject), Error);

  const std::string bytes = read_file(out / "last.ckpt");
  write_file_atomic(out / "partial.ckpt", bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_checkpoint(out / "partial.ckpt"), FormatError);
}

TEST_F(TrainerTest, IdenticalStateSavesIdenticalBytes) {
  TempDir out("ckpt2");
  CheckpointState s;
  s.subject = "x";
  s.scheduler = LrScheduler(ScheduleConfig{}, 1e-3, 2).serialize();
  s.weights["a.body.0.weight"] = Tensor({2}, std::vector<Real>{1, 2});
  save_checkpoint(out / "1.ckpt", s);
  save_checkpoint(out / "2.ckpt", s);
  EXPECT_EQ(read_file(out / "1.ckpt"), read_file(out / "2.ckpt"));
  const CheckpointState back = load_checkpoint(out / "1.ckpt");
  EXPECT_TRUE(back.weights.at("a.body.0.weight").bitwise_equal(s.weights.at("a.body.0.weight")));
}

TEST_F(TrainerTest, RerunReproducesReport) {
  auto once = [&] {
    BackboneAdapter a = with_head("mock_narrow", 8);
    ModelComponents c;
    c.adapters = {&a};
    const auto train = train_loader(), val = val_loader();
    return run_stage(stage(StageId::kComprehensiveFt, 2, 1e-3), c, train, &val).to_json();
  };
  EXPECT_EQ(once(), once());
}

}  // namespace
}  // namespace hdff
