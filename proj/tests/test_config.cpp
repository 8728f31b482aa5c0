// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>

#include <gtest/gtest.h>

#include "hdff/config.hpp"
#include "hdff/toml_lite.hpp"
#include "test_util.hpp"

namespace hdff {
namespace {

using testing::TempDir;
using testing::write_text;

TEST(Toml, ScalarsArraysAndTables) {
  const auto doc = toml::parse(R"(
title = "x"  # comment
[a.b]
i = -1_000
f = 2.5e-3
t = true
s = 'lit\eral'
arr = [
  "p", "q",   # trailing comma allowed
]
"quoted key" = 1
)",
                               "t.toml");
  EXPECT_EQ(std::get<std::string>(doc.at("").values.at("title").v), "x");
  const auto& t = doc.at("a.b").values;
  EXPECT_EQ(std::get<std::int64_t>(t.at("i").v), -1000);
  EXPECT_DOUBLE_EQ(std::get<double>(t.at("f").v), 2.5e-3);
  EXPECT_TRUE(std::get<bool>(t.at("t").v));
  EXPECT_EQ(std::get<std::string>(t.at("s").v), "lit\\eral");
  EXPECT_EQ(std::get<toml::Array>(t.at("arr").v).size(), 2u);
  EXPECT_EQ(t.at("arr").line, 8);
  EXPECT_TRUE(t.count("quoted key"));
}

TEST(Toml, SyntaxErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) {
    try {
      toml::parse(text, "c.toml");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(line_of("[a]\nx = 1\ny = \n").find("c.toml:3"), std::string::npos);
  EXPECT_NE(line_of("[a]\nx = 1\nx = 2\n").find("c.toml:3"), std::string::npos);
  EXPECT_NE(line_of("[a]\n[a]\n").find("c.toml:2"), std::string::npos);
  EXPECT_NE(line_of("x = \"open\n").find("c.toml:1"), std::string::npos);
  EXPECT_NE(line_of("[a\n").find("c.toml:1"), std::string::npos);
}

TEST(Toml, FormatDoubleRoundTrips) {
  for (double d : {1e-5, 0.1, 1.0 / 3.0, 1e22, 5e-324, 0.0})
    EXPECT_EQ(std::get<double>(toml::parse("x = " + toml::format_double(d), "d").at("").values.at("x").v), d);
}

class ConfigTest : public ::testing::Test {
 protected:
  void SetUp() override {
    unsetenv("HDFF_RUN_DIR");
    write_text(dir / "data/manifest.csv", "sample_id,image_path,label,split\n");
  }
  RunConfig parse(const std::string& text) {
    write_text(dir / "run.toml", text);
    return parse_config(dir / "run.toml");
  }
  std::string error_of(const std::string& text) {
    try {
      parse(text);
    } catch (const ConfigError& e) {
      return e.what();
    }
    return "no error";
  }
  TempDir dir{"config"};
};

TEST_F(ConfigTest, MinimalConfigFillsDefaults) {
  const RunConfig c = parse("[registry]\nbackbones = [\"mock_tiny\"]\n[data]\nmanifest = \"data/manifest.csv\"\n");
  EXPECT_EQ(c.backbones, std::vector<std::string>{"mock_tiny"});
  EXPECT_EQ(c.budget_limit, 200'000'000);
  EXPECT_EQ(c.input_size, 224);
  EXPECT_EQ(c.weights.at("mock_tiny"), "random");
  EXPECT_EQ(c.manifest, (dir / "data/manifest.csv").lexically_normal());
  EXPECT_EQ(c.stage(StageId::kSelectiveFt).freeze, FreezeMode::kHeadOnly);
  EXPECT_DOUBLE_EQ(c.stage(StageId::kSelectiveFt).optimizer.lr, 1e-3);
  EXPECT_DOUBLE_EQ(c.stage(StageId::kComprehensiveFt).optimizer.lr, 1e-5);
  EXPECT_DOUBLE_EQ(c.stage(StageId::kFusionTrain).optimizer.lr, 1e-4);
  EXPECT_DOUBLE_EQ(c.stage(StageId::kFusionTrain).optimizer.weight_decay, 1e-2);
  EXPECT_EQ(c.stage(StageId::kFusionTrain).scheduler.kind, ScheduleKind::kCosine);
  EXPECT_EQ(c.run_dir, (dir / "runs/run").lexically_normal());
}

TEST_F(ConfigTest, FusionStageWithFullFreezeRejected) {
  const auto e = error_of("[registry]\nbackbones = [\"mock_tiny\"]\n[stage.fusion]\nfreeze = \"full\"\n");
  EXPECT_NE(e.find("fusion_only"), std::string::npos) << e;
}

TEST_F(ConfigTest, AllSemanticErrorsReportedTogether) {
  const auto e = error_of(R"([registry]
backbones = ["mock_tiny", "resnet_999"]
[data]
manifest = "nope.csv"
input_size = 16
[stage.selective]
freeze = "full"
colour = "blue"
)");
  EXPECT_NE(e.find("resnet_999"), std::string::npos) << e;
  EXPECT_NE(e.find("nope.csv"), std::string::npos) << e;
  EXPECT_NE(e.find("input_size"), std::string::npos) << e;
  EXPECT_NE(e.find("head_only"), std::string::npos) << e;
  EXPECT_NE(e.find("colour"), std::string::npos) << e;
  EXPECT_NE(e.find("5 configuration error"), std::string::npos) << e;
}

TEST_F(ConfigTest, MutatedStageOrderRejected) {
  const auto e = error_of("[registry]\nbackbones = [\"mock_tiny\"]\n[pipeline]\nstages = [\"full\", \"selective\", \"fusion\"]\n");
  EXPECT_NE(e.find("stages"), std::string::npos) << e;
  EXPECT_NE(error_of("[registry]\n[pipeline]\nstages = [\"selective\", \"fusion\"]\n"), "no error");
}

TEST_F(ConfigTest, OverBudgetConfigStillParses) {
  const RunConfig c =
      parse("[registry]\nbackbones = [\"mock_tiny\", \"mock_small\", \"mock_narrow\", \"mock_mixer\"]\nbudget_limit = 10\n");
  EXPECT_EQ(c.budget_limit, 10);
}

TEST_F(ConfigTest, ResolvedCopyReparsesIdentically) {
  const RunConfig c = parse(R"([registry]
backbones = ["mock_tiny", "mock_small"]
num_classes = 2
[registry.declared_params]
extra = 12
[data]
manifest = "data/manifest.csv"
input_size = 48
policy = "none"
seed = 17
[stage.full]
epochs = 3
lr = 3e-4
scheduler = "step"
gamma = 0.5
step_size = 2
step_unit = "step"
betas = [0.8, 0.99]
[output]
run_dir = "out/r1"
)");
  write_text(dir / "resolved.toml", to_toml(c));
  const RunConfig back = parse_config(dir / "resolved.toml");
  EXPECT_EQ(back, c);
  EXPECT_EQ(to_toml(back), to_toml(c));
  EXPECT_EQ(config_digest(back), config_digest(c));
}

TEST_F(ConfigTest, RunDirEnvironmentOverride) {
  setenv("HDFF_RUN_DIR", (dir / "elsewhere").c_str(), 1);
  const RunConfig c = parse("[registry]\n[output]\nrun_dir = \"x\"\n");
  unsetenv("HDFF_RUN_DIR");
  EXPECT_EQ(c.run_dir, (dir / "elsewhere").lexically_normal());
}

TEST_F(ConfigTest, DigestPreimageDiffersOnlyAtChangedKeys) {
  const RunConfig a = parse("[registry]\n[stage.full]\nepochs = 2\n");
  RunConfig b = a;
  b.stages[StageId::kComprehensiveFt].epochs = 5;
  const auto pa = config_preimage(a), pb = config_preimage(b);
  ASSERT_EQ(pa.size(), pb.size());
  int diffs = 0;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i] != pb[i]) {
      ++diffs;
      EXPECT_EQ(pb[i], "stage.full.epochs = 5");
    }
  EXPECT_EQ(diffs, 1);
  EXPECT_NE(config_digest(a), config_digest(b));
  RunConfig moved = a;
  moved.run_dir = "/somewhere/else";
  EXPECT_EQ(config_digest(moved), config_digest(a));
}

TEST_F(ConfigTest, MissingFileNamesPath) {
  try {
    parse_config(dir / "missing.toml");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("missing.toml"), std::string::npos);
  }
}

}  // namespace
}  // namespace hdff
