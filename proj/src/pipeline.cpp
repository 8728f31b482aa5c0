// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/pipeline.hpp"

#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "hdff/archive.hpp"

namespace hdff {

namespace {

constexpr const char* kGrandSubject = "grand";

std::filesystem::path stage_dir(const std::filesystem::path& run, const std::string& subject, StageId stage) {
  return run / "stages" / subject / to_string(stage);
}

std::optional<StageReport> completed_report(const std::filesystem::path& dir) {
  const auto path = dir / "report.json";
  if (!std::filesystem::exists(path)) return std::nullopt;
  auto report = StageReport::from_json(nlohmann::json::parse(read_file(path)));
  if (!report.completed) return std::nullopt;
  return report;
}

LoaderOptions train_loader_options(const RunConfig& cfg, const StageConfig& stage, const AugmentationPolicy& policy) {
  LoaderOptions o;
  o.batch_size = stage.batch_size;
  o.input_size = cfg.input_size;
  o.shuffle = true;
  o.shuffle_seed = derive_seed(stage.seed, "shuffle");
  o.augment = stage.augment && !policy.sub_policies.empty();
  o.augment_seed = derive_seed(stage.seed, "augment");
  o.policy = policy;
  o.workers = cfg.workers;
  return o;
}

LoaderOptions eval_loader_options(int input_size, int workers) {
  LoaderOptions o;
  o.batch_size = 64;
  o.input_size = input_size;
  o.shuffle = false;
  o.workers = workers;
  return o;
}

class Runner {
 public:
  Runner(const RunConfig& cfg, const PipelineOptions& opt) : cfg_(cfg), opt_(opt), digest_(config_digest(cfg)) {}

  PipelineResult run();

 private:
  bool selected(StageId stage, const std::string& subject) const {
    if (opt_.only_stage && *opt_.only_stage != stage) return false;
    if (opt_.only_backbone && subject != kGrandSubject && *opt_.only_backbone != subject) return false;
    if (opt_.only_backbone && subject == kGrandSubject) return false;
    return true;
  }

  void prepare_run_dir();
  // Returns false when the stage was stopped before completing.
  bool run_submodel_stage(BackboneAdapter& adapter, StageId stage, std::optional<StageReport>& report);
  void write_summary(PipelineResult& result);

  const RunConfig& cfg_;
  const PipelineOptions& opt_;
  std::string digest_;
  std::filesystem::path run_;
  std::shared_ptr<ImageCache> cache_ = std::make_shared<ImageCache>();
  AugmentationPolicy policy_;
  TrainValSplit split_;
  std::vector<ManifestRecord> test_;
};

void Runner::prepare_run_dir() {
  run_ = cfg_.run_dir;
  std::filesystem::create_directories(run_);
  const auto resolved = run_ / "config.resolved.toml";
  if (std::filesystem::exists(resolved)) {
    const RunConfig previous = parse_config(resolved);
    if (config_digest(previous) != digest_)
      throw ConfigError("run directory " + run_.string() + " holds a run with a different configuration (digest " +
                        config_digest(previous) + ", current " + digest_ + ")");
  }
  write_file_atomic(resolved, to_toml(cfg_));
}

bool Runner::run_submodel_stage(BackboneAdapter& adapter, StageId stage, std::optional<StageReport>& report) {
  const std::string& name = adapter.name();
  const auto dir = stage_dir(run_, name, stage);
  const auto model_path = dir / "model.hdffw";
  if (auto done = completed_report(dir); done && std::filesystem::exists(model_path)) {
    adapter = BackboneAdapter::from_archive(load_archive(model_path, "adapter"), model_path.string());
    report = std::move(done);
    spdlog::info("{} {}: already complete, reusing {}", display_name(stage), name, model_path.string());
    return true;
  }
  if (!selected(stage, name)) return true;

  const StageConfig sc = resolved_stage(cfg_, stage, name);
  DataLoader train(split_.train, train_loader_options(cfg_, sc, policy_), cache_);
  DataLoader val(split_.val, eval_loader_options(cfg_.input_size, cfg_.workers), cache_);
  StageOptions so;
  so.subject = name;
  so.out_dir = dir;
  so.config_digest = digest_;
  so.should_stop = opt_.should_stop;
  if (opt_.resume && std::filesystem::exists(dir / "last.ckpt")) so.resume = dir / "last.ckpt";
  ModelComponents c;
  c.adapters = {&adapter};
  StageReport r = run_stage(sc, c, train, &val, so);
  if (!r.completed) return false;
  adapter.save(model_path);
  report = std::move(r);
  return true;
}

PipelineResult Runner::run() {
  if (!cfg_.has_data) throw ConfigError("training needs a [data] block with a manifest");
  if (cfg_.backbones.empty()) throw ConfigError("training needs at least one backbone in [registry] backbones");
  validate_stage_sequence(cfg_.stage_order);
  prepare_run_dir();

  PipelineResult result;
  result.run_dir = run_;
  policy_ = cfg_.load_augmentation_policy();
  const auto records = load_manifest(cfg_.manifest, cfg_.num_classes);
  split_ = train_val_split(records);
  test_ = select_split(records, Split::kTest);
  spdlog::info("data: {} train, {} val{}, {} test", split_.train.size(), split_.val.size(),
               split_.derived ? " (hash split)" : "", test_.size());

  const auto registry = BackboneRegistry::with_builtins();
  std::vector<BackboneAdapter> finished;
  bool all_finished = true;
  for (const auto& name : cfg_.backbones) {
    BackboneAdapter adapter =
        registry.load_adapter(name, cfg_.weights_for(name), derive_seed(cfg_.seed, "init/" + name), cfg_.input_size);
    if (!adapter.has_head()) {
      Rng rng(derive_seed(cfg_.seed, "head/" + name));
      adapter.attach_head(cfg_.num_classes, rng);
    }
    bool available = true;
    for (StageId stage : {StageId::kSelectiveFt, StageId::kComprehensiveFt}) {
      const bool complete_before = completed_report(stage_dir(run_, name, stage)).has_value();
      if (!available) {
        if (selected(stage, name) && !complete_before)
          throw Error(fmt::format("{} {}: the previous stage has not completed in {}", display_name(stage), name,
                                  run_.string()));
        continue;
      }
      std::optional<StageReport> report;
      if (!run_submodel_stage(adapter, stage, report)) return result;
      if (!report) {
        available = false;
        continue;
      }
      if (stage == StageId::kComprehensiveFt && report->best) result.submodel_val[name] = *report->best;
    }
    if (available)
      finished.push_back(std::move(adapter));
    else
      all_finished = false;
  }

  const auto fusion_dir = stage_dir(run_, kGrandSubject, StageId::kFusionTrain);
  const bool fusion_selected = !opt_.only_backbone && (!opt_.only_stage || *opt_.only_stage == StageId::kFusionTrain);
  if (!fusion_selected && !completed_report(fusion_dir)) {
    write_summary(result);
    return result;
  }
  if (!all_finished)
    throw Error("FUSION_TRAIN requires every backbone to finish COMPREHENSIVE_FT first (run directory " +
                run_.string() + ")");

  for (auto& a : finished) a.detach_head();
  const BudgetReport budget = check_budget(pipeline_budget(cfg_, finished));
  write_file_atomic(run_ / "budget.txt", budget.table());
  result.budget = budget;
  if (!budget.pass)
    throw Error(fmt::format("parameter budget exceeded: {} > {} ({} over); aborting before FUSION_TRAIN",
                            budget.total, budget.limit, -budget.headroom));

  std::int64_t width = 0;
  for (const auto& a : finished) width += a.feature_dim();
  FusionHead head(width, cfg_.num_classes);
  {
    Rng rng(derive_seed(cfg_.seed, "init/fusion_head"));
    head.init(rng);
  }
  const auto grand_dir = run_ / "grand_model";
  if (auto done = completed_report(fusion_dir); done && std::filesystem::exists(grand_dir / "manifest.json")) {
    spdlog::info("FUSION_TRAIN: already complete, reusing {}", grand_dir.string());
    result.grand_val = done->best;
  } else {
    const StageConfig sc = resolved_stage(cfg_, StageId::kFusionTrain, kGrandSubject);
    DataLoader train(split_.train, train_loader_options(cfg_, sc, policy_), cache_);
    DataLoader val(split_.val, eval_loader_options(cfg_.input_size, cfg_.workers), cache_);
    StageOptions so;
    so.subject = kGrandSubject;
    so.out_dir = fusion_dir;
    so.config_digest = digest_;
    so.should_stop = opt_.should_stop;
    if (opt_.resume && std::filesystem::exists(fusion_dir / "last.ckpt")) so.resume = fusion_dir / "last.ckpt";
    ModelComponents c;
    for (auto& a : finished) c.adapters.push_back(&a);
    c.fusion = &head;
    StageReport r = run_stage(sc, c, train, &val, so);
    if (!r.completed) return result;
    GrandModel(finished, head).save(grand_dir);
    result.grand_val = r.best;
  }
  result.grand_model_dir = grand_dir;

  GrandModel model = GrandModel::load(grand_dir);
  std::vector<ManifestRecord> to_predict = split_.val;
  to_predict.insert(to_predict.end(), test_.begin(), test_.end());
  result.predictions = run_ / "predictions.csv";
  write_predictions(model, to_predict, cfg_.workers, result.predictions);
  result.completed = true;
  write_summary(result);
  return result;
}

void Runner::write_summary(PipelineResult& result) {
  nlohmann::json subs = nlohmann::json::object();
  for (const auto& [name, m] : result.submodel_val) subs[name] = to_json(m);
  nlohmann::json s = {{"config_digest", digest_},
                      {"completed", result.completed},
                      {"backbones", cfg_.backbones},
                      {"val_split", split_.derived ? "hash" : "manifest"},
                      {"submodel_val", subs},
                      {"grand_val", result.grand_val ? to_json(*result.grand_val) : nlohmann::json(nullptr)}};
  if (result.budget)
    s["budget"] = {{"total", result.budget->total},
                   {"limit", result.budget->limit},
                   {"headroom", result.budget->headroom},
                   {"pass", result.budget->pass}};
  result.summary = s;
  write_file_atomic(run_ / "summary.json", s.dump(2) + "\n");
}

}  // namespace

ParamBudget pipeline_budget(const RunConfig& config, const std::vector<BackboneAdapter>& adapters) {
  ParamBudget b;
  b.limit = config.budget_limit;
  b.bytes_per_param = config.bytes_per_param;
  b.byte_limit = config.byte_limit;
  std::int64_t width = 0;
  for (const auto& a : adapters) {
    b.add(a.name(), count_params(a.body()));
    width += a.feature_dim();
  }
  if (!adapters.empty()) b.add(kFusionGroup, width * config.num_classes + config.num_classes);
  for (const auto& [name, n] : config.declared_params) b.add(name, n);
  return b;
}

BudgetReport config_budget(const RunConfig& config) {
  const auto registry = BackboneRegistry::with_builtins();
  std::vector<BackboneAdapter> adapters;
  for (const auto& name : config.backbones) {
    adapters.push_back(registry.load_adapter(name, config.weights_for(name), derive_seed(config.seed, "init/" + name),
                                             config.has_data ? std::optional<int>(config.input_size) : std::nullopt));
    if (adapters.back().has_head()) adapters.back().detach_head();
  }
  return check_budget(pipeline_budget(config, adapters));
}

void write_predictions(GrandModel& model, const std::vector<ManifestRecord>& records, int workers,
                       const std::filesystem::path& out) {
  DataLoader loader(records, eval_loader_options(model.input_size(), workers));
  std::string text = "sample_id,probability\n";
  for (std::size_t i = 0; i < loader.num_batches(); ++i) {
    const ImageBatch batch = loader.batch(0, i);
    const auto p = model.predict(batch);
    for (std::size_t k = 0; k < p.size(); ++k) text += fmt::format("{},{:.10f}\n", batch.sample_ids[k], p[k]);
  }
  if (!out.parent_path().empty()) std::filesystem::create_directories(out.parent_path());
  write_file_atomic(out, text);
}

PipelineResult run_pipeline(const RunConfig& config, const PipelineOptions& options) {
  return Runner(config, options).run();
}

}  // namespace hdff
