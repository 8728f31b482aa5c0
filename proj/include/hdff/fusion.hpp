// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

// The grand model: frozen feature extractors whose pooled pre-logits vectors
// are concatenated in registry order and classified by one linear layer.

#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hdff/backbone.hpp"
#include "hdff/dataset.hpp"
#include "hdff/optim.hpp"

namespace hdff {

struct FeatureBlock {
  std::string name;
  std::int64_t offset = 0;
  std::int64_t width = 0;

  bool operator==(const FeatureBlock&) const = default;
};

struct FusedFeature {
  Tensor values;  // B×D
  std::vector<FeatureBlock> layout;

  std::int64_t width() const { return values.empty() ? 0 : values.dim(1); }
};

std::vector<FeatureBlock> fusion_layout(std::span<const BackboneAdapter> adapters);

// Row i is the concatenation of every adapter's features for sample i, in
// the given order. Any classifier heads on the adapters are bypassed.
FusedFeature extract_fused(std::span<BackboneAdapter> adapters, const Tensor& pixels, bool keep_cache = false);
FusedFeature extract_fused(std::span<BackboneAdapter> adapters, const ImageBatch& batch);

class FusionHead {
 public:
  FusionHead(std::int64_t input_width, std::int64_t num_classes = 2);

  // Zero bias, weights U(-1/sqrt(D), 1/sqrt(D)).
  void init(Rng& rng);

  std::int64_t input_width() const { return layer_.in_features(); }
  std::int64_t num_classes() const { return layer_.out_features(); }

  // logits = fused · W + b; the stored Linear keeps W transposed (C×D).
  Tensor forward(const FusedFeature& fused, bool keep_cache = false);
  Tensor forward(const Tensor& fused, bool keep_cache = false);
  void backward(const Tensor& grad_logits) { layer_.backward(grad_logits, false); }

  Linear& layer() { return layer_; }
  const Linear& layer() const { return layer_; }

  Archive to_archive() const;
  static FusionHead from_archive(const Archive& a, const std::string& origin = "<archive>");

 private:
  Linear layer_;
};

enum class FreezeMode { kHeadOnly, kFull, kFusionOnly };

std::string to_string(FreezeMode m);
FreezeMode parse_freeze_mode(const std::string& s);

inline const std::string kFusionGroup = "fusion_head";

// What a stage is allowed to touch. Components that are absent simply
// contribute no groups.
struct ModelComponents {
  std::vector<BackboneAdapter*> adapters;
  FusionHead* fusion = nullptr;

  std::vector<std::string> group_names() const;
  std::vector<Parameter*> group_params(const std::string& group) const;
};

struct FreezeResult {
  std::set<std::string> trainable;
  std::set<std::string> frozen;
};

FreezeResult apply_freeze(const ModelComponents& components, FreezeMode mode);

// Fully qualified trainable parameters ("<group>.<param>"). Throws on group
// names the components do not have.
NamedParams collect_params(const ModelComponents& components, const std::set<std::string>& groups);

// Deep copy of every parameter value in the given groups, for bitwise
// before/after comparison.
std::map<std::string, Tensor> snapshot(const ModelComponents& components, const std::set<std::string>& groups);

// Forgery probability: softmax(logits)[1] per row; requires two classes.
std::vector<Real> fake_probability(const Tensor& logits);

std::vector<Real> predict(std::span<BackboneAdapter> adapters, FusionHead& head, const ImageBatch& batch);

// Assembled model as exported after fusion training.
class GrandModel {
 public:
  GrandModel(std::vector<BackboneAdapter> adapters, FusionHead head);

  std::vector<BackboneAdapter>& adapters() { return adapters_; }
  const std::vector<BackboneAdapter>& adapters() const { return adapters_; }
  FusionHead& head() { return head_; }
  const FusionHead& head() const { return head_; }
  int input_size() const;

  Tensor logits(const Tensor& pixels);
  std::vector<Real> predict(const ImageBatch& batch);

  // Directory: manifest.json + one adapter blob per backbone + fusion head.
  void save(const std::filesystem::path& dir) const;
  // Validates that the fusion-head width equals the sum of the backbone
  // feature dims before accepting the model.
  static GrandModel load(const std::filesystem::path& dir);

 private:
  std::vector<BackboneAdapter> adapters_;
  FusionHead head_;
};

}  // namespace hdff
