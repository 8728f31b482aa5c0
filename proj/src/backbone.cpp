// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

namespace hdff {

std::string to_string(WeightsSource s) {
  switch (s) {
    case WeightsSource::kPretrainedImagenet: return "pretrained-imagenet";
    case WeightsSource::kRandom: return "random";
    case WeightsSource::kFile: return "file-path";
  }
  return "?";
}

WeightsSource parse_weights_source(const std::string& s) {
  if (s == "pretrained-imagenet") return WeightsSource::kPretrainedImagenet;
  if (s == "random") return WeightsSource::kRandom;
  if (s == "file-path") return WeightsSource::kFile;
  throw ConfigError("unknown weights source '" + s + "'");
}

WeightsRef WeightsRef::parse(const std::string& text) {
  if (text == "random") return {WeightsSource::kRandom, {}};
  if (text == "pretrained-imagenet") return {WeightsSource::kPretrainedImagenet, {}};
  if (text.empty()) throw ConfigError("empty weights reference");
  return {WeightsSource::kFile, text};
}

std::string WeightsRef::str() const {
  return source == WeightsSource::kFile ? path.string() : to_string(source);
}

// ---------------------------------------------------------------- adapter

BackboneAdapter::BackboneAdapter(BackboneSpec spec, Sequential body, std::optional<Linear> head)
    : spec_(std::move(spec)), body_(std::move(body)), head_(std::move(head)) {
  refresh_param_count();
}

void BackboneAdapter::refresh_param_count() { spec_.param_count = count_params(*this); }

std::int64_t BackboneAdapter::feature_dim() const {
  if (!spec_.feature_dim) throw Error("backbone '" + spec_.name + "': feature_dim not resolved");
  return *spec_.feature_dim;
}

std::int64_t BackboneAdapter::resolve_feature_dim(std::int64_t batch) {
  const auto s = static_cast<std::int64_t>(spec_.input_size);
  Tensor probe({batch, 3, s, s});
  Tensor out;
  try {
    out = body_.forward(probe, false);
  } catch (const Error& e) {
    throw Error("backbone '" + spec_.name + "': feature_dim probe failed: " + e.what());
  }
  if (out.rank() != 2 || out.dim(0) != batch)
    throw Error("backbone '" + spec_.name + "': feature_dim probe failed, extractor output " +
                shape_str(out.shape()) + " is not B×D");
  const auto width = out.dim(1);
  if (spec_.feature_dim && *spec_.feature_dim != width)
    throw Error("backbone '" + spec_.name + "': probe width " + std::to_string(width) +
                " differs from resolved feature_dim " + std::to_string(*spec_.feature_dim));
  spec_.feature_dim = width;
  if (head_ && head_->in_features() != width)
    throw Error("backbone '" + spec_.name + "': head expects width " +
                std::to_string(head_->in_features()) + ", extractor emits " + std::to_string(width));
  return width;
}

Tensor BackboneAdapter::extract_features(const Tensor& images, bool keep_cache) {
  Tensor f = body_.forward(images, keep_cache);
  if (f.rank() != 2 || f.dim(1) != feature_dim())
    throw Error("backbone '" + spec_.name + "': extractor output " + shape_str(f.shape()) +
                " does not match feature_dim " + std::to_string(feature_dim()));
  return f;
}

void BackboneAdapter::backward_features(const Tensor& grad) { body_.backward(grad, false); }

void BackboneAdapter::attach_head(std::int64_t num_classes, Rng& rng) {
  head_.emplace(feature_dim(), num_classes);
  head_->init(rng);
  refresh_param_count();
}

void BackboneAdapter::detach_head() {
  head_.reset();
  refresh_param_count();
}

Linear& BackboneAdapter::head() {
  if (!head_) throw Error("backbone '" + spec_.name + "' has no head attached");
  return *head_;
}

const Linear& BackboneAdapter::head() const {
  if (!head_) throw Error("backbone '" + spec_.name + "' has no head attached");
  return *head_;
}

std::vector<ParameterGroup> BackboneAdapter::parameter_groups() {
  std::vector<ParameterGroup> groups;
  groups.push_back({body_group(), body_.parameters()});
  if (head_) groups.push_back({head_group(), head_->parameters()});
  return groups;
}

void BackboneAdapter::clear_cache() {
  body_.clear_cache();
  if (head_) head_->clear_cache();
}

Archive BackboneAdapter::to_archive() const {
  Archive a;
  a.kind = "adapter";
  a.meta = {{"name", spec_.name},
            {"feature_dim", feature_dim()},
            {"param_count", count_params(*this)},
            {"input_size", spec_.input_size},
            {"architecture", body_.describe()},
            {"has_head", head_.has_value()},
            {"num_classes", head_ ? head_->out_features() : 0}};
  for (const auto* p : body_.parameters()) a.tensors.emplace("body." + p->name, p->value);
  if (head_) {
    a.tensors.emplace("head.weight", head_->weight().value);
    a.tensors.emplace("head.bias", head_->bias().value);
  }
  return a;
}

BackboneAdapter BackboneAdapter::from_archive(const Archive& a, const std::string& origin) {
  if (a.kind != "adapter") throw FormatError(origin + ": not an adapter weights file");
  BackboneSpec spec;
  std::int64_t manifest_dim = 0, manifest_params = 0;
  Sequential body;
  std::optional<Linear> head;
  try {
    spec.name = a.meta.at("name").get<std::string>();
    spec.input_size = a.meta.at("input_size").get<int>();
    manifest_dim = a.meta.at("feature_dim").get<std::int64_t>();
    manifest_params = a.meta.at("param_count").get<std::int64_t>();
    body = Sequential::from_description(a.meta.at("architecture"));
    if (a.meta.at("has_head").get<bool>()) {
      const auto& w = a.tensor("head.weight");
      head.emplace(w.dim(1), w.dim(0));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": bad adapter manifest: " + e.what());
  }
  spec.weights_source = WeightsSource::kFile;
  for (auto* p : body.parameters()) {
    const auto& t = a.tensor("body." + p->name);
    if (t.shape() != p->value.shape())
      throw FormatError(origin + ": tensor body." + p->name + " has shape " + shape_str(t.shape()) +
                        ", architecture expects " + shape_str(p->value.shape()));
    p->value = t;
  }
  if (head) {
    head->weight().value = a.tensor("head.weight");
    head->bias().value = a.tensor("head.bias");
    if (head->bias().value.shape() != Shape{head->out_features()})
      throw FormatError(origin + ": head bias shape mismatch");
  }
  BackboneAdapter adapter(std::move(spec), std::move(body), std::move(head));
  if (adapter.resolve_feature_dim() != manifest_dim)
    throw FormatError(origin + ": manifest feature_dim " + std::to_string(manifest_dim) +
                      " disagrees with probed width " + std::to_string(adapter.feature_dim()));
  if (count_params(adapter) != manifest_params)
    throw FormatError(origin + ": manifest param_count " + std::to_string(manifest_params) +
                      " disagrees with enumerated " + std::to_string(count_params(adapter)));
  return adapter;
}

void BackboneAdapter::save(const std::filesystem::path& path) const { save_archive(path, to_archive()); }

// ---------------------------------------------------------------- counting

std::int64_t count_params(const Sequential& net) {
  std::int64_t n = 0;
  for (const auto* p : net.parameters()) n += p->value.size();
  return n;
}

std::int64_t count_params(const Linear& layer) {
  return layer.weight().value.size() + layer.bias().value.size();
}

std::int64_t count_params(const BackboneAdapter& adapter) {
  return count_params(adapter.body()) + (adapter.has_head() ? count_params(adapter.head()) : 0);
}

// ---------------------------------------------------------------- budget

void ParamBudget::add(std::string name, std::int64_t params) {
  if (params < 0) throw Error("negative parameter count for '" + name + "'");
  per_model.emplace_back(std::move(name), params);
}

std::int64_t ParamBudget::total() const {
  std::int64_t t = 0;
  for (const auto& [_, n] : per_model) t += n;
  return t;
}

BudgetReport check_budget(const ParamBudget& budget) {
  BudgetReport r;
  r.per_model = budget.per_model;
  r.total = budget.total();
  r.limit = budget.limit;
  r.headroom = budget.limit - r.total;
  r.serialized_bytes = r.total * budget.bytes_per_param;
  r.byte_limit = budget.byte_limit;
  r.pass = r.total <= r.limit && (budget.byte_limit <= 0 || r.serialized_bytes <= budget.byte_limit);
  return r;
}

std::string BudgetReport::table() const {
  std::size_t w = 5;
  for (const auto& [name, _] : per_model) w = std::max(w, name.size());
  std::string out;
  out += fmt::format("{:<{}}  {:>15}  {:>9}\n", "model", w, "params", "share");
  out += std::string(w + 2 + 15 + 2 + 9, '-') + "\n";
  for (const auto& [name, n] : per_model) {
    const double share = total > 0 ? 100.0 * static_cast<double>(n) / static_cast<double>(total) : 0.0;
    out += fmt::format("{:<{}}  {:>15}  {:>8.2f}%\n", name, w, n, share);
  }
  out += std::string(w + 2 + 15 + 2 + 9, '-') + "\n";
  out += fmt::format("{:<{}}  {:>15}  ({:.2f}M)\n", "total", w, total, static_cast<double>(total) / 1e6);
  out += fmt::format("{:<{}}  {:>15}  ({:.2f}M)\n", "limit", w, limit, static_cast<double>(limit) / 1e6);
  out += fmt::format("{:<{}}  {:>15}  ({:.2f}M)\n", "headroom", w, headroom,
                     static_cast<double>(headroom) / 1e6);
  out += fmt::format("{:<{}}  {:>15}  ({:.2f} MB)\n", "serialized", w, serialized_bytes,
                     static_cast<double>(serialized_bytes) / 1e6);
  if (byte_limit > 0) out += fmt::format("{:<{}}  {:>15}\n", "byte limit", w, byte_limit);
  out += fmt::format("result: {}\n", pass ? "PASS" : "FAIL");
  return out;
}

// ---------------------------------------------------------------- registry

Sequential make_mock_body(const MockArch& arch) {
  const auto pad = arch.kernel / 2;
  Sequential s;
  s.add(std::make_unique<Conv2d>(3, arch.width, arch.kernel, 2, pad));
  s.add(std::make_unique<ReLU>());
  s.add(std::make_unique<Conv2d>(arch.width, 2 * arch.width, arch.kernel, 2, pad));
  s.add(std::make_unique<ReLU>());
  s.add(std::make_unique<GlobalAvgPool>());
  s.add(std::make_unique<Linear>(2 * arch.width, arch.feature_dim));
  s.add(std::make_unique<ReLU>());
  return s;
}

BackboneRegistry::Handle BackboneRegistry::register_backbone(BackboneSpec spec, BodyFactory factory) {
  if (spec.name.empty()) throw ConfigError("backbone name must not be empty");
  if (contains(spec.name)) throw ConfigError("backbone '" + spec.name + "' is already registered");
  entries_.push_back({std::move(spec), std::move(factory)});
  return entries_.size() - 1;
}

bool BackboneRegistry::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.spec.name == name; });
}

const BackboneRegistry::Entry& BackboneRegistry::entry(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.spec.name == name) return e;
  throw ConfigError("unknown backbone '" + name + "'");
}

const BackboneSpec& BackboneRegistry::spec(const std::string& name) const { return entry(name).spec; }

std::vector<std::string> BackboneRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.spec.name);
  return out;
}

BackboneAdapter BackboneRegistry::load_adapter(const std::string& name, const WeightsRef& weights,
                                               std::uint64_t seed, std::optional<int> input_size) const {
  const Entry& e = entry(name);
  BackboneSpec spec = e.spec;
  if (input_size) spec.input_size = *input_size;
  spec.feature_dim.reset();

  switch (weights.source) {
    case WeightsSource::kFile: {
      if (!std::filesystem::exists(weights.path))
        throw Error("backbone '" + name + "': missing weights file " + weights.path.string());
      auto adapter = BackboneAdapter::from_archive(load_archive(weights.path), weights.path.string());
      if (adapter.name() != name)
        throw Error("weights file " + weights.path.string() + " holds backbone '" + adapter.name() +
                    "', expected '" + name + "'");
      if (input_size && adapter.spec().input_size != *input_size) {
        BackboneSpec s = adapter.spec();
        s.input_size = *input_size;
        s.feature_dim.reset();
        std::optional<Linear> head;
        if (adapter.has_head()) head = adapter.head();
        BackboneAdapter resized(std::move(s), adapter.body(), std::move(head));
        resized.resolve_feature_dim();
        return resized;
      }
      return adapter;
    }
    case WeightsSource::kPretrainedImagenet:
      throw Error("backbone '" + name +
                  "': pretrained weights must be supplied as a converted weights file (missing weights file)");
    case WeightsSource::kRandom: {
      if (!e.factory)
        throw Error("backbone '" + name + "' has no built-in architecture; load it from a weights file");
      Rng rng(seed);
      spec.weights_source = WeightsSource::kRandom;
      BackboneAdapter adapter(spec, e.factory(spec, rng));
      adapter.resolve_feature_dim();
      return adapter;
    }
  }
  throw Error("unreachable weights source");
}

const std::vector<std::string>& hdff_backbone_names() {
  static const std::vector<std::string> names = {"swin_mlp", "coatnet", "effnetv2", "davit"};
  return names;
}

BackboneRegistry BackboneRegistry::with_builtins() {
  BackboneRegistry r;
  for (const auto& n : hdff_backbone_names()) {
    BackboneSpec s;
    s.name = n;
    s.weights_source = WeightsSource::kPretrainedImagenet;
    r.register_backbone(s, nullptr);
  }
  auto mock = [&r](const std::string& name, MockArch arch) {
    BackboneSpec s;
    s.name = name;
    s.weights_source = WeightsSource::kRandom;
    r.register_backbone(s, [arch](const BackboneSpec&, Rng& rng) {
      Sequential body = make_mock_body(arch);
      body.init(rng);
      // Kaiming-uniform weights (gain sqrt(2) for ReLU) keep activations from
      // shrinking through the stack.
      for (auto* p : body.parameters())
        if (p->name.ends_with("weight"))
          for (auto& w : p->value.values()) w *= std::sqrt(6.0);
      return body;
    });
  };
  mock("mock_tiny", {4, 16, 3});
  mock("mock_small", {6, 32, 3});
  mock("mock_narrow", {4, 8, 5});
  mock("mock_mixer", {8, 16, 3});
  return r;
}

}  // namespace hdff
