// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/fusion.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace hdff {

std::vector<FeatureBlock> fusion_layout(std::span<const BackboneAdapter> adapters) {
  std::vector<FeatureBlock> layout;
  std::int64_t offset = 0;
  for (const auto& a : adapters) {
    layout.push_back({a.name(), offset, a.feature_dim()});
    offset += a.feature_dim();
  }
  return layout;
}

FusedFeature extract_fused(std::span<BackboneAdapter> adapters, const Tensor& pixels, bool keep_cache) {
  if (adapters.empty()) throw Error("extract_fused: no adapters");
  FusedFeature out;
  out.layout = fusion_layout(adapters);
  const auto batch = pixels.dim(0);
  const auto width = out.layout.back().offset + out.layout.back().width;
  out.values = Tensor({batch, width});
  for (std::size_t k = 0; k < adapters.size(); ++k) {
    auto& a = adapters[k];
    if (pixels.rank() != 4 || pixels.dim(2) != a.spec().input_size || pixels.dim(3) != a.spec().input_size)
      throw Error("extract_fused: batch " + shape_str(pixels.shape()) + " does not match input_size " +
                  std::to_string(a.spec().input_size) + " of '" + a.name() + "'");
    const Tensor f = a.extract_features(pixels, keep_cache);
    const auto& blk = out.layout[k];
    for (std::int64_t n = 0; n < batch; ++n)
      for (std::int64_t j = 0; j < blk.width; ++j) out.values.at(n, blk.offset + j) = f.at(n, j);
  }
  return out;
}

FusedFeature extract_fused(std::span<BackboneAdapter> adapters, const ImageBatch& batch) {
  return extract_fused(adapters, batch.pixels, false);
}

// ---------------------------------------------------------------- head

FusionHead::FusionHead(std::int64_t input_width, std::int64_t num_classes) : layer_(input_width, num_classes) {}

void FusionHead::init(Rng& rng) {
  const Real bound = 1.0 / std::sqrt(static_cast<Real>(input_width()));
  for (auto& v : layer_.weight().value.values()) v = rng.uniform(-bound, bound);
  layer_.bias().value.fill(0);
}

Tensor FusionHead::forward(const FusedFeature& fused, bool keep_cache) {
  return forward(fused.values, keep_cache);
}

Tensor FusionHead::forward(const Tensor& fused, bool keep_cache) {
  if (fused.rank() != 2 || fused.dim(1) != input_width())
    throw Error("fusion head expects width " + std::to_string(input_width()) + ", got " + shape_str(fused.shape()));
  return layer_.forward(fused, keep_cache);
}

Archive FusionHead::to_archive() const {
  Archive a;
  a.kind = "fusion_head";
  a.meta = {{"input_width", input_width()}, {"num_classes", num_classes()}};
  a.tensors.emplace("weight", layer_.weight().value);
  a.tensors.emplace("bias", layer_.bias().value);
  return a;
}

FusionHead FusionHead::from_archive(const Archive& a, const std::string& origin) {
  if (a.kind != "fusion_head") throw FormatError(origin + ": not a fusion head blob");
  std::int64_t width = 0, classes = 0;
  try {
    width = a.meta.at("input_width").get<std::int64_t>();
    classes = a.meta.at("num_classes").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": bad fusion head manifest: " + e.what());
  }
  FusionHead h(width, classes);
  const auto& w = a.tensor("weight");
  const auto& b = a.tensor("bias");
  if (w.shape() != Shape{classes, width} || b.shape() != Shape{classes})
    throw FormatError(origin + ": fusion head tensors " + shape_str(w.shape()) + "/" + shape_str(b.shape()) +
                      " do not match declared width " + std::to_string(width));
  h.layer().weight().value = w;
  h.layer().bias().value = b;
  return h;
}

// ---------------------------------------------------------------- freezing

std::string to_string(FreezeMode m) {
  switch (m) {
    case FreezeMode::kHeadOnly: return "head_only";
    case FreezeMode::kFull: return "full";
    case FreezeMode::kFusionOnly: return "fusion_only";
  }
  return "?";
}

FreezeMode parse_freeze_mode(const std::string& s) {
  if (s == "head_only") return FreezeMode::kHeadOnly;
  if (s == "full") return FreezeMode::kFull;
  if (s == "fusion_only") return FreezeMode::kFusionOnly;
  throw ConfigError("unknown freeze policy '" + s + "' (expected head_only, full or fusion_only)");
}

std::vector<std::string> ModelComponents::group_names() const {
  std::vector<std::string> names;
  for (auto* a : adapters) {
    names.push_back(a->body_group());
    if (a->has_head()) names.push_back(a->head_group());
  }
  if (fusion) names.push_back(kFusionGroup);
  return names;
}

std::vector<Parameter*> ModelComponents::group_params(const std::string& group) const {
  if (fusion && group == kFusionGroup) return fusion->layer().parameters();
  for (auto* a : adapters)
    for (auto& g : a->parameter_groups())
      if (g.name == group) return g.params;
  throw Error("unknown parameter group '" + group + "'");
}

FreezeResult apply_freeze(const ModelComponents& c, FreezeMode mode) {
  FreezeResult r;
  for (auto* a : c.adapters) {
    const bool body = mode == FreezeMode::kFull;
    const bool head = mode == FreezeMode::kFull || mode == FreezeMode::kHeadOnly;
    (body ? r.trainable : r.frozen).insert(a->body_group());
    if (a->has_head()) (head ? r.trainable : r.frozen).insert(a->head_group());
  }
  if (c.fusion) (mode == FreezeMode::kFusionOnly ? r.trainable : r.frozen).insert(kFusionGroup);
  return r;
}

NamedParams collect_params(const ModelComponents& c, const std::set<std::string>& groups) {
  NamedParams out;
  for (const auto& g : groups)
    for (auto* p : c.group_params(g)) out.emplace_back(g + "." + p->name, p);
  return out;
}

std::map<std::string, Tensor> snapshot(const ModelComponents& c, const std::set<std::string>& groups) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, p] : collect_params(c, groups)) out.emplace(name, p->value);
  return out;
}

// ---------------------------------------------------------------- inference

std::vector<Real> fake_probability(const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(1) != 2)
    throw Error("forgery probability requires two-class logits, got " + shape_str(logits.shape()));
  std::vector<Real> p(static_cast<std::size_t>(logits.dim(0)));
  for (std::int64_t n = 0; n < logits.dim(0); ++n) {
    const Real d = logits.at(n, 0) - logits.at(n, 1);
    p[static_cast<std::size_t>(n)] = d >= 0 ? std::exp(-d) / (1.0 + std::exp(-d)) : 1.0 / (1.0 + std::exp(d));
  }
  return p;
}

std::vector<Real> predict(std::span<BackboneAdapter> adapters, FusionHead& head, const ImageBatch& batch) {
  return fake_probability(head.forward(extract_fused(adapters, batch)));
}

GrandModel::GrandModel(std::vector<BackboneAdapter> adapters, FusionHead head)
    : adapters_(std::move(adapters)), head_(std::move(head)) {
  std::int64_t width = 0;
  for (auto& a : adapters_) {
    if (a.has_head()) a.detach_head();
    width += a.feature_dim();
  }
  if (width != head_.input_width())
    throw FormatError("fusion head width " + std::to_string(head_.input_width()) +
                      " does not equal the sum of backbone feature dims " + std::to_string(width));
  for (const auto& a : adapters_)
    if (a.spec().input_size != adapters_.front().spec().input_size)
      throw FormatError("backbones disagree on input_size");
}

int GrandModel::input_size() const { return adapters_.front().spec().input_size; }

Tensor GrandModel::logits(const Tensor& pixels) { return head_.forward(extract_fused(adapters_, pixels)); }

std::vector<Real> GrandModel::predict(const ImageBatch& batch) { return fake_probability(logits(batch.pixels)); }

void GrandModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["schema"] = 1;
  manifest["kind"] = "hdff_grand_model";
  manifest["num_classes"] = head_.num_classes();
  manifest["input_size"] = input_size();
  auto backbones = nlohmann::json::array();
  for (const auto& a : adapters_) {
    const auto file = a.name() + ".hdffw";
    a.save(dir / file);
    backbones.push_back(
        {{"name", a.name()}, {"feature_dim", a.feature_dim()}, {"param_count", count_params(a)}, {"file", file}});
  }
  manifest["registry_order"] = backbones;
  manifest["fusion_head"] = {{"file", "fusion_head.hdffw"}, {"input_width", head_.input_width()}};
  save_archive(dir / "fusion_head.hdffw", head_.to_archive());
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

GrandModel GrandModel::load(const std::filesystem::path& dir) {
  const auto mpath = dir / "manifest.json";
  if (!std::filesystem::exists(mpath)) throw Error("no grand-model manifest at " + mpath.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(mpath));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(mpath.string() + ": " + e.what());
  }
  try {
    if (manifest.at("schema").get<int>() != 1) throw FormatError(mpath.string() + ": unsupported schema");
    std::vector<BackboneAdapter> adapters;
    std::int64_t width = 0;
    for (const auto& b : manifest.at("registry_order")) {
      const auto file = dir / b.at("file").get<std::string>();
      auto a = BackboneAdapter::from_archive(load_archive(file, "adapter"), file.string());
      if (a.name() != b.at("name").get<std::string>() || a.feature_dim() != b.at("feature_dim").get<std::int64_t>())
        throw FormatError(file.string() + ": blob does not match manifest entry '" + b.at("name").get<std::string>() +
                          "'");
      width += a.feature_dim();
      adapters.push_back(std::move(a));
    }
    const auto hfile = dir / manifest.at("fusion_head").at("file").get<std::string>();
    auto head = FusionHead::from_archive(load_archive(hfile, "fusion_head"), hfile.string());
    if (head.input_width() != width)
      throw FormatError(dir.string() + ": fusion head width " + std::to_string(head.input_width()) +
                        " != sum of feature dims " + std::to_string(width));
    if (head.num_classes() != manifest.at("num_classes").get<std::int64_t>())
      throw FormatError(dir.string() + ": fusion head class count disagrees with manifest");
    return GrandModel(std::move(adapters), std::move(head));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(mpath.string() + ": " + e.what());
  }
}

}  // namespace hdff
