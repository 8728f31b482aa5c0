// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

// Generated datasets for desk-scale training and ablations.
//
//  forgery: smooth random colour fields; label 1 images carry a locally
//           blended high-frequency patch.
//  xor:     two independent bits choose whether a textured patch appears in
//           the left and/or right half; label = left XOR right. After global
//           pooling the patch count is all a frozen random backbone sees, and
//           the label is not monotone in that count.
//  or:      the same images labelled left OR right (linearly separable).

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hdff/dataset.hpp"
#include "hdff/image.hpp"

namespace hdff {

enum class SynthKind { kForgery, kXor, kOr };

std::string to_string(SynthKind k);
SynthKind parse_synth_kind(const std::string& s);

struct SynthOptions {
  SynthKind kind = SynthKind::kForgery;
  int train = 512;
  int val = 128;
  int test = 64;
  int size = 32;
  std::uint64_t seed = 0;
  // Peak amplitude of the patch texture on the unit intensity scale.
  double amplitude = 0.25;
  bool label_test = true;
};

struct SynthSample {
  RgbImage image;
  int label = 0;
  int bits = 0;  // xor/or: bit 0 left patch, bit 1 right patch
};

// Sample `index` of a dataset; a pure function of (options, split, index).
SynthSample synth_sample(const SynthOptions& options, Split split, int index);

// Writes images/<id>.png and manifest.csv under `dir`; returns the records.
std::vector<ManifestRecord> write_synth_dataset(const SynthOptions& options, const std::filesystem::path& dir);

}  // namespace hdff
