// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/ablation.hpp"

#include <map>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "hdff/archive.hpp"
#include "hdff/trainer.hpp"

namespace hdff {

namespace {

AblationResult train_variant(const RunConfig& cfg, const std::string& variant) {
  if (!cfg.has_data) throw ConfigError("ablation needs a [data] block with a manifest");
  if (cfg.backbones.empty()) throw ConfigError("ablation needs at least one backbone");
  const std::string name = cfg.backbones.front();
  const auto records = load_manifest(cfg.manifest, cfg.num_classes);
  const TrainValSplit split = train_val_split(records);
  if (split.val.empty()) throw Error("ablation needs validation samples");
  const AugmentationPolicy policy = cfg.load_augmentation_policy();
  auto cache = std::make_shared<ImageCache>();

  AblationResult r;
  r.variant = variant;
  r.config_digest = config_digest(cfg);
  r.preimage = config_preimage(cfg);

  const auto registry = BackboneRegistry::with_builtins();
  const std::uint64_t init_seed = derive_seed(cfg.seed, "init/" + name);
  const std::uint64_t head_seed = derive_seed(cfg.seed, "head/" + name);
  r.seeds = {init_seed, head_seed};
  BackboneAdapter adapter = registry.load_adapter(name, cfg.weights_for(name), init_seed, cfg.input_size);
  if (!adapter.has_head()) {
    Rng rng(head_seed);
    adapter.attach_head(cfg.num_classes, rng);
  }
  ModelComponents c;
  c.adapters = {&adapter};

  LoaderOptions eval_opts;
  eval_opts.batch_size = 64;
  eval_opts.input_size = cfg.input_size;
  eval_opts.shuffle = false;
  eval_opts.workers = cfg.workers;
  DataLoader val(split.val, eval_opts, cache);

  for (StageId stage : {StageId::kSelectiveFt, StageId::kComprehensiveFt}) {
    const StageConfig sc = resolved_stage(cfg, stage, name);
    r.seeds.push_back(sc.seed);
    LoaderOptions o;
    o.batch_size = sc.batch_size;
    o.input_size = cfg.input_size;
    o.shuffle_seed = derive_seed(sc.seed, "shuffle");
    o.augment = sc.augment && !policy.sub_policies.empty();
    o.augment_seed = derive_seed(sc.seed, "augment");
    o.policy = policy;
    o.workers = cfg.workers;
    DataLoader train(split.train, o, cache);
    StageOptions so;
    so.subject = name;
    so.config_digest = r.config_digest;
    const StageReport report = run_stage(sc, c, train, &val, so);
    for (const auto& h : report.history) {
      r.lr_trace.push_back(h.lr);
      if (h.val) r.per_epoch.push_back(*h.val);
    }
  }
  r.final = evaluate(val, [&](const Tensor& px) { return stage_logits(c, FreezeMode::kFull, px); });
  spdlog::info("ablation variant {}: val accuracy {:.4f}", variant, r.final.accuracy);
  return r;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt::format("{:.4f}", *v) : std::string("n/a"); }

}  // namespace

nlohmann::json to_json(const AblationResult& r) {
  nlohmann::json per_epoch = nlohmann::json::array();
  for (const auto& m : r.per_epoch) per_epoch.push_back(to_json(m));
  return {{"variant", r.variant},       {"final", to_json(r.final)},          {"per_epoch", per_epoch},
          {"lr_trace", r.lr_trace},     {"seeds", r.seeds},                   {"config_digest", r.config_digest},
          {"preimage", r.preimage}};
}

const AblationResult& AblationReport::result(const std::string& variant) const {
  for (const auto& r : results)
    if (r.variant == variant) return r;
  throw Error("ablation report has no variant '" + variant + "'");
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json variants = nlohmann::json::array();
  for (const auto& r : results) variants.push_back(hdff::to_json(r));
  nlohmann::json ref = nlohmann::json::array();
  for (const auto& row : reference) ref.push_back({{"variant", row.variant}, {"accuracy", row.accuracy}});
  return {{"axis", axis},
          {"variants", variants},
          {"varied_keys", varied_keys},
          {"flags", flags},
          {"reference", {{"rows", ref}, {"status", "not reproduced"}, {"note", reference_note}}}};
}

std::string AblationReport::table() const {
  std::string out = fmt::format("ablation: {}\n", axis);
  out += fmt::format("{:<14} {:>9} {:>8} {:>10} {:>6}  {}\n", "variant", "accuracy", "auc", "mean_loss", "n",
                     "config_digest");
  for (const auto& r : results)
    out += fmt::format("{:<14} {:>9.4f} {:>8} {:>10.6f} {:>6}  {}\n", r.variant, r.final.accuracy,
                       fmt_opt(r.final.auc), r.final.mean_loss, r.final.n, r.config_digest);
  for (const auto& row : reference)
    out += fmt::format("{:<14} {:>9.4f} {:>8} {:>10} {:>6}  {}\n", "ref:" + row.variant, row.accuracy, "-", "-", "-",
                       "reference, not reproduced");
  if (!varied_keys.empty()) out += fmt::format("varied: {}\n", fmt::join(varied_keys, ", "));
  if (!flags.empty()) out += fmt::format("flags: {}\n", fmt::join(flags, ", "));
  if (!reference_note.empty()) out += "note: " + reference_note + "\n";
  return out;
}

std::vector<std::string> differing_keys(const RunConfig& a, const RunConfig& b) {
  auto split = [](const RunConfig& c) {
    std::map<std::string, std::string> m;
    for (const auto& line : config_preimage(c)) {
      const auto eq = line.find(" = ");
      m[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return m;
  };
  const auto ma = split(a), mb = split(b);
  std::set<std::string> keys;
  for (const auto& [k, v] : ma)
    if (auto it = mb.find(k); it == mb.end() || it->second != v) keys.insert(k);
  for (const auto& [k, v] : mb)
    if (!ma.count(k)) keys.insert(k);
  return {keys.begin(), keys.end()};
}

AblationReport ablate_scheduler(const RunConfig& base) {
  AblationReport report;
  report.axis = "scheduler";
  std::vector<RunConfig> configs;
  for (ScheduleKind kind : {ScheduleKind::kStep, ScheduleKind::kCosine}) {
    RunConfig cfg = base;
    for (auto& [id, sc] : cfg.stages) sc.scheduler.kind = kind;
    report.results.push_back(train_variant(cfg, to_string(kind)));
    configs.push_back(std::move(cfg));
  }
  report.varied_keys = differing_keys(configs[0], configs[1]);
  report.reference = {{"step", 0.9949}, {"cosine", 0.9967}};
  report.reference_note = "single-model accuracy on the private phase 1 test set; not reproducible here";
  return report;
}

AblationReport ablate_finetune_depth(const RunConfig& base, double no_gap_threshold) {
  AblationReport report;
  report.axis = "finetune_depth";
  RunConfig head_only = base;
  head_only.stages[StageId::kComprehensiveFt].epochs = 0;
  report.results.push_back(train_variant(head_only, "head_only"));
  report.results.push_back(train_variant(base, "full_ft"));
  report.varied_keys = differing_keys(head_only, base);
  const double a = report.results[0].final.accuracy, b = report.results[1].final.accuracy;
  if (std::abs(b - a) < no_gap_threshold) report.flags.push_back("no gap");
  if (b < a) report.flags.push_back("full_ft below head_only");
  report.reference = {{"head_only", 0.75}};
  report.reference_note = "approximate head-only accuracy cap reported for a Swin-MLP sub-model; not reproducible here";
  return report;
}

void write_report(const AblationReport& report, const std::filesystem::path& dir) {
  if (report.results.empty()) throw Error("write_report: no ablation results");
  try {
    std::filesystem::create_directories(dir);
  } catch (const std::filesystem::filesystem_error& e) {
    throw Error("cannot create report directory " + dir.string() + ": " + e.what());
  }
  write_file_atomic(dir / (report.axis + ".json"), report.to_json().dump(2) + "\n");
  write_file_atomic(dir / (report.axis + ".txt"), report.table());
}

}  // namespace hdff
