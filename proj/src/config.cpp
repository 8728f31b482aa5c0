// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/config.hpp"

#include <cstdlib>
#include <set>

#include <fmt/format.h>

#include "hdff/archive.hpp"
#include "hdff/toml_lite.hpp"

namespace hdff {

namespace {

// Typed access to one table, remembering which keys were consumed and
// collecting errors instead of throwing on the first one.
class TableReader {
 public:
  TableReader(const toml::Table* table, std::string name, std::string origin, std::vector<std::string>& errors)
      : table_(table), name_(std::move(name)), origin_(std::move(origin)), errors_(errors) {}

  bool present() const { return table_ != nullptr; }

  const toml::Value* find(const std::string& key) {
    if (!table_) return nullptr;
    auto it = table_->values.find(key);
    if (it == table_->values.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  void error(const toml::Value* v, const std::string& key, const std::string& what) {
    errors_.push_back(fmt::format("{}:{}: [{}] {}: {}", origin_, v ? v->line : (table_ ? table_->line : 0), name_,
                                  key, what));
  }

  void error(const std::string& what) {
    errors_.push_back(fmt::format("{}:{}: [{}] {}", origin_, table_ ? table_->line : 0, name_, what));
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    const toml::Value* v = find(key);
    if (!v) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (v->is_bool()) return void(out = std::get<bool>(v->v));
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (v->is_string()) return void(out = std::get<std::string>(v->v));
    } else if constexpr (std::is_floating_point_v<T>) {
      if (v->is_float()) return void(out = std::get<double>(v->v));
      if (v->is_int()) return void(out = static_cast<double>(std::get<std::int64_t>(v->v)));
    } else if constexpr (std::is_integral_v<T>) {
      if (v->is_int()) {
        const auto i = std::get<std::int64_t>(v->v);
        if constexpr (std::is_unsigned_v<T>) {
          if (i < 0) return error(v, key, "must be non-negative");
        }
        if (i < static_cast<std::int64_t>(std::numeric_limits<T>::min()) ||
            static_cast<std::uint64_t>(i) > static_cast<std::uint64_t>(std::numeric_limits<T>::max()))
          return error(v, key, "out of range");
        return void(out = static_cast<T>(i));
      }
    }
    error(v, key, "unexpected " + v->type_name());
  }

  void read_strings(const std::string& key, std::vector<std::string>& out) {
    const toml::Value* v = find(key);
    if (!v) return;
    if (!v->is_array()) return error(v, key, "expected an array of strings");
    std::vector<std::string> tmp;
    for (const auto& e : std::get<toml::Array>(v->v)) {
      if (!e.is_string()) return error(v, key, "expected an array of strings");
      tmp.push_back(std::get<std::string>(e.v));
    }
    out = std::move(tmp);
  }

  void read_pair(const std::string& key, double& a, double& b) {
    const toml::Value* v = find(key);
    if (!v) return;
    const auto* arr = v->is_array() ? &std::get<toml::Array>(v->v) : nullptr;
    if (!arr || arr->size() != 2) return error(v, key, "expected [beta1, beta2]");
    double out[2];
    for (int i = 0; i < 2; ++i) {
      const auto& e = (*arr)[static_cast<std::size_t>(i)];
      if (e.is_float())
        out[i] = std::get<double>(e.v);
      else if (e.is_int())
        out[i] = static_cast<double>(std::get<std::int64_t>(e.v));
      else
        return error(v, key, "expected numbers");
    }
    a = out[0];
    b = out[1];
  }

  void reject_unknown() {
    if (!table_) return;
    for (const auto& [k, v] : table_->values)
      if (!used_.count(k)) error(&v, k, "unknown key");
  }

  const toml::Table* table() const { return table_; }

 private:
  const toml::Table* table_;
  std::string name_;
  std::string origin_;
  std::vector<std::string>& errors_;
  std::set<std::string> used_;
};

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative()) path = base / path;
  return path.lexically_normal();
}

bool is_keyword_policy(const std::string& p) { return p == "imagenet" || p == "none"; }

bool is_keyword_weights(const std::string& w) { return w == "random" || w == "pretrained-imagenet"; }

}  // namespace

const StageConfig& RunConfig::stage(StageId s) const {
  auto it = stages.find(s);
  if (it == stages.end()) throw ConfigError("no configuration for stage " + display_name(s));
  return it->second;
}

WeightsRef RunConfig::weights_for(const std::string& backbone) const {
  if (auto it = weights.find(backbone); it != weights.end()) return WeightsRef::parse(it->second);
  const auto registry = BackboneRegistry::with_builtins();
  if (registry.contains(backbone)) return {registry.spec(backbone).weights_source, {}};
  return {};
}

AugmentationPolicy RunConfig::load_augmentation_policy() const {
  if (policy == "imagenet") return imagenet_policy();
  if (policy == "none") return {};
  return load_policy(policy);
}

RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir, const std::string& origin,
                            const std::string& default_run_name) {
  const toml::Document doc = toml::parse(text, origin);
  std::vector<std::string> errors;
  RunConfig cfg;
  for (auto s : canonical_stages()) cfg.stages[s] = default_stage_config(s);

  auto table = [&](const std::string& name) -> const toml::Table* {
    auto it = doc.find(name);
    return it == doc.end() ? nullptr : &it->second;
  };
  static const std::set<std::string> known_tables = {"",
                                                     "registry",
                                                     "registry.weights",
                                                     "registry.declared_params",
                                                     "data",
                                                     "pipeline",
                                                     "stage.selective",
                                                     "stage.full",
                                                     "stage.fusion",
                                                     "output"};
  for (const auto& [name, t] : doc)
    if (!known_tables.count(name)) errors.push_back(fmt::format("{}:{}: unknown table [{}]", origin, t.line, name));
  if (auto* top = table(""); top && !top->values.empty())
    errors.push_back(fmt::format("{}:{}: keys must live inside a table", origin, top->values.begin()->second.line));

  // [registry]
  TableReader reg(table("registry"), "registry", origin, errors);
  if (!reg.present() && !table("registry.weights") && !table("registry.declared_params"))
    errors.push_back(origin + ": missing [registry] table");
  reg.read_strings("backbones", cfg.backbones);
  reg.read("budget_limit", cfg.budget_limit);
  reg.read("bytes_per_param", cfg.bytes_per_param);
  reg.read("byte_limit", cfg.byte_limit);
  reg.read("num_classes", cfg.num_classes);
  reg.reject_unknown();
  const auto catalog = BackboneRegistry::with_builtins();
  std::set<std::string> seen;
  for (const auto& b : cfg.backbones) {
    if (!catalog.contains(b)) reg.error("unknown backbone '" + b + "'");
    if (!seen.insert(b).second) reg.error("backbone '" + b + "' listed twice");
  }
  if (cfg.budget_limit <= 0) reg.error("budget_limit must be positive");
  if (cfg.bytes_per_param <= 0) reg.error("bytes_per_param must be positive");
  if (cfg.num_classes < 2) reg.error("num_classes must be >= 2");

  if (auto* wt = table("registry.weights")) {
    for (const auto& [name, v] : wt->values) {
      if (!v.is_string()) {
        errors.push_back(fmt::format("{}:{}: [registry.weights] {}: expected a string", origin, v.line, name));
        continue;
      }
      if (!seen.count(name))
        errors.push_back(
            fmt::format("{}:{}: [registry.weights] {}: not listed in registry.backbones", origin, v.line, name));
      const auto& w = std::get<std::string>(v.v);
      cfg.weights[name] = is_keyword_weights(w) ? w : resolve_path(base_dir, w).string();
    }
  }
  for (const auto& b : cfg.backbones)
    if (!cfg.weights.count(b) && catalog.contains(b)) cfg.weights[b] = to_string(catalog.spec(b).weights_source);
  if (auto* dp = table("registry.declared_params")) {
    for (const auto& [name, v] : dp->values) {
      if (!v.is_int() || std::get<std::int64_t>(v.v) < 0)
        errors.push_back(fmt::format("{}:{}: [registry.declared_params] {}: expected a non-negative integer", origin,
                                     v.line, name));
      else
        cfg.declared_params[name] = std::get<std::int64_t>(v.v);
    }
  }

  // [data]
  TableReader data(table("data"), "data", origin, errors);
  cfg.has_data = data.present();
  if (data.present()) {
    std::string manifest;
    data.read("manifest", manifest);
    data.read("input_size", cfg.input_size);
    data.read("policy", cfg.policy);
    data.read("seed", cfg.seed);
    data.read("workers", cfg.workers);
    data.reject_unknown();
    if (manifest.empty()) {
      data.error("manifest is required");
    } else {
      cfg.manifest = resolve_path(base_dir, manifest);
      if (!std::filesystem::exists(cfg.manifest)) data.error("manifest not found: " + cfg.manifest.string());
    }
    if (cfg.input_size < 32) data.error("input_size must be >= 32");
    if (cfg.workers < 1) data.error("workers must be >= 1");
    if (!is_keyword_policy(cfg.policy)) {
      cfg.policy = resolve_path(base_dir, cfg.policy).string();
      if (!std::filesystem::exists(cfg.policy)) data.error("policy file not found: " + cfg.policy);
    }
  }

  // [pipeline]
  TableReader pipe(table("pipeline"), "pipeline", origin, errors);
  std::vector<std::string> order;
  pipe.read_strings("stages", order);
  pipe.reject_unknown();
  if (pipe.find("stages") || !order.empty()) {
    try {
      std::vector<StageId> ids;
      for (const auto& s : order) ids.push_back(parse_stage(s));
      validate_stage_sequence(ids);
      cfg.stage_order = ids;
    } catch (const ConfigError& e) {
      pipe.error(std::string("stages: ") + e.what());
    }
  }

  // [stage.*]
  for (auto id : canonical_stages()) {
    const std::string name = "stage." + to_string(id);
    TableReader st(table(name), name, origin, errors);
    StageConfig& sc = cfg.stages[id];
    std::string freeze = to_string(sc.freeze);
    std::string sched = to_string(sc.scheduler.kind);
    std::string unit = to_string(sc.scheduler.unit);
    st.read("epochs", sc.epochs);
    st.read("freeze", freeze);
    st.read("lr", sc.optimizer.lr);
    st.read("eta_max", sc.optimizer.lr);
    st.read("weight_decay", sc.optimizer.weight_decay);
    st.read_pair("betas", sc.optimizer.beta1, sc.optimizer.beta2);
    st.read("eps", sc.optimizer.eps);
    st.read("scheduler", sched);
    st.read("eta_min", sc.scheduler.eta_min);
    st.read("t_max", sc.scheduler.t_max);
    st.read("gamma", sc.scheduler.gamma);
    st.read("step_size", sc.scheduler.step_size);
    st.read("step_unit", unit);
    st.read("batch_size", sc.batch_size);
    st.read("augment", sc.augment);
    st.reject_unknown();
    try {
      sc.freeze = parse_freeze_mode(freeze);
      sc.scheduler.kind = parse_schedule_kind(sched);
      sc.scheduler.unit = parse_step_unit(unit);
      sc.validate();
    } catch (const ConfigError& e) {
      st.error(e.what());
    }
  }

  // [output]
  TableReader out(table("output"), "output", origin, errors);
  std::string run_dir;
  out.read("run_dir", run_dir);
  out.reject_unknown();
  if (const char* env = std::getenv("HDFF_RUN_DIR"); env && *env) run_dir = env;
  cfg.run_dir = run_dir.empty() ? resolve_path(base_dir, "runs/" + default_run_name) : resolve_path(base_dir, run_dir);

  if (!errors.empty()) {
    std::string msg = std::to_string(errors.size()) + " configuration error(s):";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  const auto abs = std::filesystem::absolute(path);
  return parse_config_text(read_file(abs), abs.parent_path(), path.string(), abs.stem().string());
}

namespace {

struct Entry {
  std::string table, key, value;
};

std::string toml_strings(const std::vector<std::string>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + toml::quote(v[i]);
  return s + "]";
}

std::vector<Entry> entries(const RunConfig& c) {
  std::vector<Entry> e;
  e.push_back({"registry", "backbones", toml_strings(c.backbones)});
  e.push_back({"registry", "budget_limit", std::to_string(c.budget_limit)});
  e.push_back({"registry", "bytes_per_param", std::to_string(c.bytes_per_param)});
  e.push_back({"registry", "byte_limit", std::to_string(c.byte_limit)});
  e.push_back({"registry", "num_classes", std::to_string(c.num_classes)});
  for (const auto& [k, v] : c.weights) e.push_back({"registry.weights", toml::quote(k), toml::quote(v)});
  for (const auto& [k, v] : c.declared_params)
    e.push_back({"registry.declared_params", toml::quote(k), std::to_string(v)});
  if (c.has_data) {
    e.push_back({"data", "manifest", toml::quote(c.manifest.string())});
    e.push_back({"data", "input_size", std::to_string(c.input_size)});
    e.push_back({"data", "policy", toml::quote(c.policy)});
    e.push_back({"data", "seed", std::to_string(c.seed)});
    e.push_back({"data", "workers", std::to_string(c.workers)});
  }
  std::vector<std::string> order;
  for (auto s : c.stage_order) order.push_back(to_string(s));
  e.push_back({"pipeline", "stages", toml_strings(order)});
  for (const auto& [id, s] : c.stages) {
    const std::string t = "stage." + to_string(id);
    e.push_back({t, "epochs", std::to_string(s.epochs)});
    e.push_back({t, "freeze", toml::quote(to_string(s.freeze))});
    e.push_back({t, "lr", toml::format_double(s.optimizer.lr)});
    e.push_back({t, "weight_decay", toml::format_double(s.optimizer.weight_decay)});
    e.push_back({t, "betas",
                 "[" + toml::format_double(s.optimizer.beta1) + ", " + toml::format_double(s.optimizer.beta2) + "]"});
    e.push_back({t, "eps", toml::format_double(s.optimizer.eps)});
    e.push_back({t, "scheduler", toml::quote(to_string(s.scheduler.kind))});
    e.push_back({t, "eta_min", toml::format_double(s.scheduler.eta_min)});
    e.push_back({t, "t_max", std::to_string(s.scheduler.t_max)});
    e.push_back({t, "gamma", toml::format_double(s.scheduler.gamma)});
    e.push_back({t, "step_size", std::to_string(s.scheduler.step_size)});
    e.push_back({t, "step_unit", toml::quote(to_string(s.scheduler.unit))});
    e.push_back({t, "batch_size", std::to_string(s.batch_size)});
    e.push_back({t, "augment", s.augment ? "true" : "false"});
  }
  e.push_back({"output", "run_dir", toml::quote(c.run_dir.string())});
  return e;
}

}  // namespace

std::string to_toml(const RunConfig& c) {
  std::string out;
  std::string current = "\x01";
  for (const auto& e : entries(c)) {
    if (e.table != current) {
      out += (out.empty() ? "" : "\n") + std::string("[") + e.table + "]\n";
      current = e.table;
    }
    out += e.key + " = " + e.value + "\n";
  }
  return out;
}

std::vector<std::string> config_preimage(const RunConfig& c) {
  std::vector<std::string> lines;
  // The output location does not affect results, so relocated runs share a
  // digest.
  for (const auto& e : entries(c))
    if (e.table != "output") lines.push_back(e.table + "." + e.key + " = " + e.value);
  return lines;
}

std::string config_digest(const RunConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& line : config_preimage(c)) h = fnv1a64(line + "\n", h);
  return fmt::format("{:016x}", h);
}

StageConfig resolved_stage(const RunConfig& config, StageId stage, const std::string& subject) {
  StageConfig s = config.stage(stage);
  s.seed = derive_seed(config.seed, "stage/" + subject + "/" + to_string(stage));
  return s;
}

}  // namespace hdff
