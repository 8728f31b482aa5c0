// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hdff/image.hpp"
#include "hdff/rng.hpp"

namespace hdff {

enum class AugKind {
  kInvert,
  kRotate,
  kSharpness,
  kShearY,
  kTranslateX,
  kColor,
  kBrightness,
  kShearX,
  kTranslateY,
  kContrast,
  kPosterize,
  kSolarize,
  kEqualize,
  kAutoContrast,
};

std::string to_string(AugKind k);
AugKind parse_aug_kind(const std::string& s);
bool is_geometric(AugKind k);
bool has_magnitude(AugKind k);

struct AugmentationOp {
  AugKind kind = AugKind::kInvert;
  double probability = 0.0;
  int level = 0;  // 0..9
};

// Level 0..9 mapped linearly into the op's range (unsigned; geometric ops
// get their sign sampled separately):
//   Rotate 0..30 deg, Shear 0..0.3, Translate 0..0.45*S px,
//   enhance factors 0.1..1.9, Posterize bits 8..4, Solarize threshold 1..0.
double op_magnitude(AugKind kind, int level, int image_size);

// Applies one op deterministically with an already-resolved signed value.
Image apply_op(const Image& image, AugKind kind, double value);

struct AugmentationPolicy {
  // Each sub-policy is an ordered op sequence, canonically a pair.
  std::vector<std::vector<AugmentationOp>> sub_policies;

  bool empty() const { return sub_policies.empty(); }
};

// Picks one sub-policy uniformly, then fires each of its ops independently
// with its own probability. Output is clamped to [0,1].
Image apply_policy(const AugmentationPolicy& policy, const Image& image, Rng& rng);

// The 25 ImageNet AutoAugment sub-policies.
AugmentationPolicy imagenet_policy();

// One sub-policy per non-blank line:
//   [(Posterize, 0.4, 8), (Rotate, 0.6, 9)]
// Level may be None for ops without magnitude; '#' starts a comment.
AugmentationPolicy parse_policy(const std::string& text, const std::string& origin = "<policy>");
AugmentationPolicy load_policy(const std::filesystem::path& path);
std::string format_policy(const AugmentationPolicy& policy);

}  // namespace hdff
