// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hdff/archive.hpp"
#include "hdff/nn.hpp"

namespace hdff {

enum class WeightsSource { kPretrainedImagenet, kRandom, kFile };

std::string to_string(WeightsSource s);
WeightsSource parse_weights_source(const std::string& s);

struct WeightsRef {
  WeightsSource source = WeightsSource::kRandom;
  std::filesystem::path path;  // only for kFile

  // "random", "pretrained-imagenet", or anything else as a file path.
  static WeightsRef parse(const std::string& text);
  std::string str() const;
};

struct BackboneSpec {
  std::string name;
  int input_size = 224;
  std::optional<std::int64_t> feature_dim;  // unset until resolved at load
  std::int64_t param_count = 0;
  WeightsSource weights_source = WeightsSource::kRandom;
};

struct ParameterGroup {
  std::string name;
  std::vector<Parameter*> params;
};

// Uniform wrapper around one feature extractor. The body maps a normalized
// B×3×S×S batch to the pooled pre-logits vector (B×feature_dim); the head is
// the optional per-backbone classifier used during sub-model fine-tuning.
class BackboneAdapter {
 public:
  BackboneAdapter(BackboneSpec spec, Sequential body, std::optional<Linear> head = std::nullopt);

  const BackboneSpec& spec() const { return spec_; }
  const std::string& name() const { return spec_.name; }

  // Throws if the width has not been resolved yet.
  std::int64_t feature_dim() const;
  // Runs a zero batch through the body and fixes feature_dim from the output
  // width. A second probe must agree with the first.
  std::int64_t resolve_feature_dim(std::int64_t batch = 1);

  Tensor extract_features(const Tensor& images, bool keep_cache = false);
  // Backpropagates dL/dfeatures through the body (accumulating body grads).
  void backward_features(const Tensor& grad);

  bool has_head() const { return head_.has_value(); }
  void attach_head(std::int64_t num_classes, Rng& rng);
  void detach_head();
  Linear& head();
  const Linear& head() const;

  Sequential& body() { return body_; }
  const Sequential& body() const { return body_; }

  std::string body_group() const { return spec_.name + ".body"; }
  std::string head_group() const { return spec_.name + ".head"; }
  // Disjoint and exhaustive: {<name>.body, <name>.head (if attached)}.
  std::vector<ParameterGroup> parameter_groups();

  Archive to_archive() const;
  static BackboneAdapter from_archive(const Archive& archive, const std::string& origin = "<archive>");
  void save(const std::filesystem::path& path) const;

  void clear_cache();

 private:
  void refresh_param_count();

  BackboneSpec spec_;
  Sequential body_;
  std::optional<Linear> head_;
};

std::int64_t count_params(const BackboneAdapter& adapter);
std::int64_t count_params(const Sequential& net);
std::int64_t count_params(const Linear& layer);

struct ParamBudget {
  std::vector<std::pair<std::string, std::int64_t>> per_model;
  std::int64_t limit = 200'000'000;
  // Serialized-size reporting; a byte limit of 0 disables the byte check.
  std::int64_t bytes_per_param = 4;
  std::int64_t byte_limit = 0;

  void add(std::string name, std::int64_t params);
  std::int64_t total() const;
};

struct BudgetReport {
  bool pass = false;
  std::int64_t total = 0;
  std::int64_t limit = 0;
  std::int64_t headroom = 0;  // limit - total; negative on failure
  std::int64_t serialized_bytes = 0;
  std::int64_t byte_limit = 0;
  std::vector<std::pair<std::string, std::int64_t>> per_model;

  std::string table() const;
};

BudgetReport check_budget(const ParamBudget& budget);

// Builds a freshly initialized body for a registered architecture.
using BodyFactory = std::function<Sequential(const BackboneSpec&, Rng&)>;

struct MockArch {
  std::int64_t width = 4;
  std::int64_t feature_dim = 16;
  std::int64_t kernel = 3;
};

// conv(k, s2) - relu - conv(k, s2) - relu - pool - linear - relu.
Sequential make_mock_body(const MockArch& arch);

class BackboneRegistry {
 public:
  // Index of the entry; registry order is the fusion concatenation order.
  using Handle = std::size_t;

  Handle register_backbone(BackboneSpec spec, BodyFactory factory);
  bool contains(const std::string& name) const;
  const BackboneSpec& spec(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }

  // Does not mutate the registry. A file source must carry a manifest for
  // the same backbone name.
  BackboneAdapter load_adapter(const std::string& name, const WeightsRef& weights, std::uint64_t seed,
                               std::optional<int> input_size = std::nullopt) const;

  // The four HDFF backbones (weights-file only) followed by the mock set.
  static BackboneRegistry with_builtins();

 private:
  struct Entry {
    BackboneSpec spec;
    BodyFactory factory;
  };
  const Entry& entry(const std::string& name) const;
  std::vector<Entry> entries_;
};

// Names of the four fused backbones, in fusion order.
const std::vector<std::string>& hdff_backbone_names();

}  // namespace hdff
