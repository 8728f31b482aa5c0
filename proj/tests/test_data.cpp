// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "hdff/augment.hpp"
#include "hdff/dataset.hpp"
#include "hdff/image.hpp"
#include "test_util.hpp"

namespace hdff {
namespace {

using testing::TempDir;
using testing::write_text;

RgbImage constant_rgb(int h, int w, std::uint8_t v) {
  RgbImage img;
  img.height = h;
  img.width = w;
  img.data.assign(static_cast<std::size_t>(h * w * 3), v);
  return img;
}

RgbImage random_rgb(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  RgbImage img = constant_rgb(h, w, 0);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

Image random_image(int s, std::uint64_t seed) { return preprocess(random_rgb(s, s, seed), s); }

TEST(Preprocess, ShapeContract) {
  const Image out = preprocess(random_rgb(448, 448, 1), 224);
  EXPECT_EQ(out.height, 224);
  EXPECT_EQ(out.width, 224);
  EXPECT_EQ(out.pixels.size(), 3u * 224 * 224);
}

TEST(Preprocess, ConstantGrayStaysConstant) {
  for (int s : {17, 32, 64}) {
    const Image out = preprocess(constant_rgb(50, 37, 128), s);
    for (float v : out.pixels) EXPECT_NEAR(v, 128.0 / 255.0, 1e-6);
  }
  EXPECT_NEAR(128.0 / 255.0, 0.50196, 1e-5);
}

TEST(Preprocess, SameSizeIsIdentityUpToUnitScaling) {
  const RgbImage src = random_rgb(24, 24, 3);
  const Image out = preprocess(src, 24);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x)
      for (int c = 0; c < 3; ++c)
        EXPECT_EQ(out.at(c, y, x), quantize_unit(src.data[(static_cast<std::size_t>(y) * 24 + x) * 3 + c] / 255.0));
}

TEST(Decode, RejectsNonRgbAndReadsPng) {
  TempDir dir("img");
  const RgbImage src = random_rgb(5, 7, 4);
  write_png(dir / "a.png", src);
  const RgbImage back = decode_image(dir / "a.png");
  EXPECT_EQ(back.height, 5);
  EXPECT_EQ(back.width, 7);
  EXPECT_EQ(back.data, src.data);
  // An 8-bit grayscale PNG (1x1) must not be promoted.
  static const unsigned char gray_png[] = {
      0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52, 0x00, 0x00,
      0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x00, 0x00, 0x00, 0x00, 0x3a, 0x7e, 0x9b, 0x55, 0x00, 0x00, 0x00,
      0x0a, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x68, 0x00, 0x00, 0x00, 0x82, 0x00, 0x81, 0x77, 0xcd, 0x72,
      0xb6, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};
  write_text(dir / "g.png", std::string(reinterpret_cast<const char*>(gray_png), sizeof(gray_png)));
  EXPECT_THROW(decode_image(dir / "g.png"), Error);
  EXPECT_THROW(decode_image(dir / "missing.png"), Error);
}

TEST(Normalize, ListingConstants) {
  Image img(1, 1);
  img.at(0, 0, 0) = quantize_unit(0.485);
  img.at(1, 0, 0) = 1.0f;
  img.at(2, 0, 0) = quantize_unit(0.406);
  const Tensor t = normalize(img);
  EXPECT_NEAR(t[0], 0.0, 1e-7);
  EXPECT_NEAR(t[1], (1.0 - 0.456) / 0.224, 1e-12);
  EXPECT_NEAR(t[1], 2.428571, 1e-6);
  EXPECT_NEAR(t[2], 0.0, 1e-7);
}

TEST(Normalize, PerChannelBounds) {
  const Tensor t = normalize(random_image(16, 9));
  const std::int64_t plane = 16 * 16;
  for (int c = 0; c < 3; ++c) {
    const double lo = (0.0 - kImagenetMean[c]) / kImagenetStd[c];
    const double hi = (1.0 - kImagenetMean[c]) / kImagenetStd[c];
    for (std::int64_t i = 0; i < plane; ++i) {
      EXPECT_GE(t[c * plane + i], lo - 1e-12);
      EXPECT_LE(t[c * plane + i], hi + 1e-12);
    }
  }
}

TEST(Augment, MagnitudeTable) {
  EXPECT_DOUBLE_EQ(op_magnitude(AugKind::kRotate, 9, 32), 30.0);
  EXPECT_DOUBLE_EQ(op_magnitude(AugKind::kRotate, 0, 32), 0.0);
  EXPECT_DOUBLE_EQ(op_magnitude(AugKind::kShearX, 9, 32), 0.3);
  EXPECT_DOUBLE_EQ(op_magnitude(AugKind::kTranslateY, 9, 40), 0.45 * 40);
  EXPECT_DOUBLE_EQ(op_magnitude(AugKind::kColor, 0, 32), 0.1);
  EXPECT_DOUBLE_EQ(op_magnitude(AugKind::kBrightness, 9, 32), 1.9);
  EXPECT_DOUBLE_EQ(op_magnitude(AugKind::kPosterize, 0, 32), 8.0);
  EXPECT_DOUBLE_EQ(op_magnitude(AugKind::kPosterize, 9, 32), 4.0);
  EXPECT_DOUBLE_EQ(op_magnitude(AugKind::kSolarize, 0, 32), 1.0);
  EXPECT_DOUBLE_EQ(op_magnitude(AugKind::kSolarize, 9, 32), 0.0);
}

TEST(Augment, ZeroProbabilityIsBitwiseIdentity) {
  AugmentationPolicy p = imagenet_policy();
  for (auto& sub : p.sub_policies)
    for (auto& op : sub) op.probability = 0.0;
  const Image img = random_image(20, 2);
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    EXPECT_EQ(apply_policy(p, img, rng), img);
  }
}

TEST(Augment, RotateLevelZeroIsIdentity) {
  const AugmentationPolicy p{{{{AugKind::kRotate, 1.0, 0}}}};
  const Image img = random_image(20, 5);
  Rng rng(1);
  EXPECT_EQ(apply_policy(p, img, rng), img);
}

TEST(Augment, InvertTwiceIsBitwiseIdentity) {
  const AugmentationPolicy p{{{{AugKind::kInvert, 1.0, 0}, {AugKind::kInvert, 1.0, 0}}}};
  const Image img = random_image(20, 6);
  Rng rng(3);
  EXPECT_EQ(apply_policy(p, img, rng), img);
  EXPECT_NE(apply_op(img, AugKind::kInvert, 0), img);
}

TEST(Augment, SameSeedReproducibleAndClamped) {
  const AugmentationPolicy p = imagenet_policy();
  EXPECT_EQ(p.sub_policies.size(), 25u);
  const Image img = random_image(24, 7);
  for (std::uint64_t s = 0; s < 30; ++s) {
    Rng a(s), b(s);
    const Image x = apply_policy(p, img, a), y = apply_policy(p, img, b);
    EXPECT_EQ(x, y);
    for (float v : x.pixels) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(Augment, EveryOpStaysInRange) {
  const Image img = random_image(16, 8);
  for (int k = 0; k <= static_cast<int>(AugKind::kAutoContrast); ++k) {
    const auto kind = static_cast<AugKind>(k);
    for (int level : {0, 5, 9})
      for (double sign : {1.0, -1.0}) {
        const double v = op_magnitude(kind, level, 16) * (is_geometric(kind) ? sign : 1.0);
        const Image out = apply_op(img, kind, v);
        ASSERT_EQ(out.pixels.size(), img.pixels.size());
        for (float x : out.pixels) {
          EXPECT_GE(x, 0.0f) << to_string(kind);
          EXPECT_LE(x, 1.0f) << to_string(kind);
        }
      }
  }
}

TEST(PolicyFile, ParseFormatRoundTripAndErrors) {
  const auto text = format_policy(imagenet_policy());
  const auto back = parse_policy(text);
  EXPECT_EQ(format_policy(back), text);
  const auto p = parse_policy("# comment\n[(Invert, 0.5, None), (Rotate, 1.0, 3)]\n\n");
  ASSERT_EQ(p.sub_policies.size(), 1u);
  EXPECT_EQ(p.sub_policies[0][1].kind, AugKind::kRotate);
  EXPECT_EQ(p.sub_policies[0][1].level, 3);
  EXPECT_THROW(parse_policy("[(Blur, 0.5, 3)]"), ConfigError);
  EXPECT_THROW(parse_policy("[(Rotate, 1.5, 3)]"), ConfigError);
  EXPECT_THROW(parse_policy("[(Rotate, 0.5, 10)]"), ConfigError);
  try {
    parse_policy("[(Rotate, 0.5, 1)]\n[(Rotate, 0.5,", "p.txt");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("p.txt:2"), std::string::npos);
  }
}

class ManifestTest : public ::testing::Test {
 protected:
  TempDir dir{"manifest"};
};

TEST_F(ManifestTest, WellFormedRows) {
  write_text(dir / "m.csv",
             "sample_id,image_path,label,split\na,img/a.png,0,train\nb,img/b.png,1,val\nc,/abs/c.png,unlabeled,test\n");
  const auto r = load_manifest(dir / "m.csv");
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0].image_path, dir / "img/a.png");
  EXPECT_EQ(r[1].split, Split::kVal);
  EXPECT_EQ(r[2].label, kUnlabeled);
  EXPECT_EQ(r[2].image_path, std::filesystem::path("/abs/c.png"));
}

TEST_F(ManifestTest, RowErrorsNameTheLine) {
  write_text(dir / "m.csv", "sample_id,image_path,label,split\na,a.png,0,train\nb,b.png,2,train\n");
  try {
    load_manifest(dir / "m.csv", 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
  write_text(dir / "s.csv", "sample_id,image_path,label,split\na,a.png,0,holdout\n");
  EXPECT_THROW(load_manifest(dir / "s.csv"), Error);
  write_text(dir / "u.csv", "sample_id,image_path,label,split\na,a.png,unlabeled,train\n");
  EXPECT_THROW(load_manifest(dir / "u.csv"), Error);
  write_text(dir / "h.csv", "id,path,label,split\n");
  EXPECT_THROW(load_manifest(dir / "h.csv"), Error);
}

TEST_F(ManifestTest, HeaderOnlyGivesEmptyList) {
  write_text(dir / "m.csv", "sample_id,image_path,label,split\n");
  EXPECT_TRUE(load_manifest(dir / "m.csv").empty());
}

TEST_F(ManifestTest, WriteReadRoundTrip) {
  std::vector<ManifestRecord> recs = {{"a", dir / "i/a.png", 1, Split::kTrain},
                                      {"b", dir / "i/b.png", kUnlabeled, Split::kTest}};
  write_manifest(dir / "m.csv", recs);
  EXPECT_EQ(load_manifest(dir / "m.csv"), recs);
}

TEST(Split, HashSplitWhenNoValRows) {
  std::vector<ManifestRecord> recs;
  for (int i = 0; i < 1000; ++i) recs.push_back({"s" + std::to_string(i), "x.png", i % 2, Split::kTrain});
  const auto s = train_val_split(recs);
  EXPECT_TRUE(s.derived);
  EXPECT_EQ(s.train.size() + s.val.size(), 1000u);
  EXPECT_GT(s.val.size(), 60u);
  EXPECT_LT(s.val.size(), 140u);
  EXPECT_EQ(train_val_split(recs).val, s.val);
  recs[0].split = Split::kVal;
  const auto m = train_val_split(recs);
  EXPECT_FALSE(m.derived);
  EXPECT_EQ(m.val.size(), 1u);
}

class LoaderTest : public ::testing::Test {
 protected:
  void SetUp() override {
    for (int i = 0; i < 10; ++i) {
      const auto p = dir / ("img" + std::to_string(i) + ".png");
      write_png(p, random_rgb(12, 12, static_cast<std::uint64_t>(i)));
      records.push_back({"id" + std::to_string(i), p, i % 2, Split::kTrain});
    }
  }
  TempDir dir{"loader"};
  std::vector<ManifestRecord> records;
};

TEST_F(LoaderTest, BatchSizesAndCoverage) {
  LoaderOptions o;
  o.batch_size = 4;
  o.input_size = 8;
  o.shuffle_seed = 5;
  DataLoader loader(records, o);
  const auto batches = loader.epoch_batches(0);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[0].size(), 4);
  EXPECT_EQ(batches[1].size(), 4);
  EXPECT_EQ(batches[2].size(), 2);
  EXPECT_EQ(batches[0].pixels.shape(), (Shape{4, 3, 8, 8}));
  std::multiset<std::string> ids;
  for (const auto& b : batches) ids.insert(b.sample_ids.begin(), b.sample_ids.end());
  std::multiset<std::string> expect;
  for (const auto& r : records) expect.insert(r.sample_id);
  EXPECT_EQ(ids, expect);
}

TEST_F(LoaderTest, OrderIsPureFunctionOfSeedAndEpoch) {
  LoaderOptions o;
  o.shuffle_seed = 11;
  DataLoader a(records, o), b(records, o);
  EXPECT_EQ(a.epoch_order(3), b.epoch_order(3));
  EXPECT_NE(a.epoch_order(0), a.epoch_order(1));
  o.shuffle_seed = 12;
  EXPECT_NE(DataLoader(records, o).epoch_order(0), a.epoch_order(0));
}

TEST_F(LoaderTest, EvalLoaderIsBitwiseStableAndWorkerInvariant) {
  LoaderOptions o;
  o.batch_size = 3;
  o.input_size = 10;
  o.augment = true;
  o.augment_seed = 9;
  o.policy = imagenet_policy();
  o.workers = 1;
  DataLoader one(records, o);
  o.workers = 3;
  DataLoader three(records, o);
  for (std::size_t i = 0; i < one.num_batches(); ++i)
    EXPECT_TRUE(one.batch(2, i).pixels.bitwise_equal(three.batch(2, i).pixels));

  o.augment = false;
  o.shuffle = false;
  DataLoader val(records, o);
  for (std::size_t i = 0; i < val.num_batches(); ++i)
    EXPECT_TRUE(val.batch(0, i).pixels.bitwise_equal(val.batch(1, i).pixels));
}

TEST_F(LoaderTest, UnreadableImageNamesPath) {
  records[4].image_path = dir / "gone.png";
  LoaderOptions o;
  o.batch_size = 10;
  o.input_size = 8;
  DataLoader loader(records, o);
  try {
    loader.batch(0, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("gone.png"), std::string::npos);
  }
}

}  // namespace
}  // namespace hdff
