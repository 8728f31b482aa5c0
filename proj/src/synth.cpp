// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/synth.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "hdff/rng.hpp"

namespace hdff {

namespace {

constexpr int kGrid = 4;

// Bilinear upsampling of a kGrid×kGrid lattice of random values per channel.
std::vector<double> smooth_field(Rng& rng, int size, double lo, double hi) {
  std::vector<double> out(static_cast<std::size_t>(3 * size * size));
  for (int c = 0; c < 3; ++c) {
    double lattice[kGrid][kGrid];
    for (auto& row : lattice)
      for (auto& v : row) v = rng.uniform(lo, hi);
    for (int y = 0; y < size; ++y) {
      const double gy = (y + 0.5) / size * (kGrid - 1);
      const int y0 = std::min(static_cast<int>(gy), kGrid - 2);
      const double fy = gy - y0;
      for (int x = 0; x < size; ++x) {
        const double gx = (x + 0.5) / size * (kGrid - 1);
        const int x0 = std::min(static_cast<int>(gx), kGrid - 2);
        const double fx = gx - x0;
        const double top = lattice[y0][x0] * (1 - fx) + lattice[y0][x0 + 1] * fx;
        const double bottom = lattice[y0 + 1][x0] * (1 - fx) + lattice[y0 + 1][x0 + 1] * fx;
        out[(static_cast<std::size_t>(c) * size + y) * size + x] = top * (1 - fy) + bottom * fy;
      }
    }
  }
  return out;
}

// Adds zero-mean grayscale noise inside a square, feathered at the border.
void blend_patch(std::vector<double>& field, int size, Rng& rng, int y0, int x0, int side, double amplitude) {
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double edge = std::min({y + 1, x + 1, side - y, side - x});
      const double alpha = std::min(1.0, edge / 2.0);
      const double n = (rng.coin(0.5) ? 1.0 : -1.0) * amplitude * alpha;
      for (int c = 0; c < 3; ++c) field[(static_cast<std::size_t>(c) * size + y0 + y) * size + x0 + x] += n;
    }
}

RgbImage to_rgb(const std::vector<double>& field, int size) {
  RgbImage img;
  img.height = img.width = size;
  img.data.resize(static_cast<std::size_t>(3 * size * size));
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(field[(static_cast<std::size_t>(c) * size + y) * size + x], 0.0, 1.0);
        img.data[(static_cast<std::size_t>(y) * size + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

}  // namespace

std::string to_string(SynthKind k) {
  switch (k) {
    case SynthKind::kForgery: return "forgery";
    case SynthKind::kXor: return "xor";
    case SynthKind::kOr: return "or";
  }
  return "?";
}

SynthKind parse_synth_kind(const std::string& s) {
  if (s == "forgery") return SynthKind::kForgery;
  if (s == "xor") return SynthKind::kXor;
  if (s == "or") return SynthKind::kOr;
  throw ConfigError("unknown dataset kind '" + s + "' (expected forgery, xor or or)");
}

SynthSample synth_sample(const SynthOptions& o, Split split, int index) {
  if (o.size < 16) throw ConfigError("synthetic image size must be >= 16");
  Rng rng(derive_seed(derive_seed(o.seed, "synth/" + to_string(split)), static_cast<std::uint64_t>(index)));
  SynthSample s;
  const int size = o.size;
  if (o.kind == SynthKind::kForgery) {
    auto field = smooth_field(rng, size, 0.2, 0.8);
    s.label = rng.coin(0.5) ? 1 : 0;
    if (s.label == 1) {
      const int side = size / 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(size / 4 + 1)));
      const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size - side + 1)));
      const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size - side + 1)));
      blend_patch(field, size, rng, y0, x0, side, o.amplitude);
    }
    s.image = to_rgb(field, size);
    return s;
  }
  auto field = smooth_field(rng, size, 0.4, 0.6);
  s.bits = static_cast<int>(rng.below(4));
  const int half = size / 2;
  const int side = size / 4;
  for (int bit = 0; bit < 2; ++bit) {
    if (!(s.bits & (1 << bit))) continue;
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size - side + 1)));
    const int x0 = bit * half + static_cast<int>(rng.below(static_cast<std::uint64_t>(half - side + 1)));
    blend_patch(field, size, rng, y0, x0, side, o.amplitude);
  }
  const int a = s.bits & 1, b = (s.bits >> 1) & 1;
  s.label = o.kind == SynthKind::kXor ? (a ^ b) : (a | b);
  s.image = to_rgb(field, size);
  return s;
}

std::vector<ManifestRecord> write_synth_dataset(const SynthOptions& o, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  std::vector<ManifestRecord> records;
  const std::pair<Split, int> parts[] = {{Split::kTrain, o.train}, {Split::kVal, o.val}, {Split::kTest, o.test}};
  for (const auto& [split, count] : parts)
    for (int i = 0; i < count; ++i) {
      const SynthSample s = synth_sample(o, split, i);
      const std::string id = fmt::format("{}_{:05d}", to_string(split), i);
      const auto rel = std::filesystem::path("images") / (id + ".png");
      write_png(dir / rel, s.image);
      ManifestRecord r;
      r.sample_id = id;
      r.image_path = dir / rel;
      r.label = split == Split::kTest && !o.label_test ? kUnlabeled : s.label;
      r.split = split;
      records.push_back(std::move(r));
    }
  write_manifest(dir / "manifest.csv", records);
  return records;
}

}  // namespace hdff
