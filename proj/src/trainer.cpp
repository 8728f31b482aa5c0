// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/trainer.hpp"

#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "hdff/archive.hpp"

namespace hdff {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr const char* kWeightPrefix = "w/";
constexpr const char* kBestPrefix = "best/";
constexpr const char* kOptimPrefix = "adam/";

std::set<std::string> all_groups(const ModelComponents& c) {
  const auto names = c.group_names();
  return {names.begin(), names.end()};
}

void require_layout(const ModelComponents& c, FreezeMode mode) {
  if (mode == FreezeMode::kFusionOnly) {
    if (!c.fusion) throw Error("fusion training needs a fusion head");
    if (c.adapters.empty()) throw Error("fusion training needs at least one backbone");
    return;
  }
  if (c.adapters.size() != 1 || c.fusion) throw Error("sub-model stages train exactly one backbone and no fusion head");
  if (!c.adapters.front()->has_head()) throw Error("backbone '" + c.adapters.front()->name() + "' has no head");
}

// Runs the forward pass; with `train`, activations needed by backward() are
// kept for the trainable part only.
Tensor forward(const ModelComponents& c, FreezeMode mode, const Tensor& pixels, bool train) {
  if (mode == FreezeMode::kFusionOnly) {
    std::vector<Tensor> feats;
    std::int64_t width = 0;
    for (auto* a : c.adapters) {
      feats.push_back(a->extract_features(pixels, false));
      width += feats.back().dim(1);
    }
    const std::int64_t batch = pixels.dim(0);
    Tensor fused({batch, width});
    std::int64_t offset = 0;
    for (const auto& f : feats) {
      const auto w = f.dim(1);
      for (std::int64_t n = 0; n < batch; ++n)
        std::copy_n(f.data() + n * w, w, fused.data() + n * width + offset);
      offset += w;
    }
    return c.fusion->forward(fused, train);
  }
  BackboneAdapter& a = *c.adapters.front();
  const bool body = train && mode == FreezeMode::kFull;
  Tensor feats = a.extract_features(pixels, body);
  return a.head().forward(feats, train);
}

void backward(const ModelComponents& c, FreezeMode mode, const Tensor& grad_logits) {
  if (mode == FreezeMode::kFusionOnly) {
    c.fusion->backward(grad_logits);
    return;
  }
  BackboneAdapter& a = *c.adapters.front();
  const bool body = mode == FreezeMode::kFull;
  Tensor g = a.head().backward(grad_logits, body);
  if (body) a.backward_features(g);
}

void clear_caches(const ModelComponents& c) {
  for (auto* a : c.adapters) {
    a->clear_cache();
    if (a->has_head()) a->head().clear_cache();
  }
  if (c.fusion) c.fusion->layer().clear_cache();
}

std::map<std::string, Tensor> values_of(const NamedParams& params) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, p] : params) out.emplace(name, p->value);
  return out;
}

void assign(const NamedParams& params, const std::map<std::string, Tensor>& values, const std::string& what) {
  for (const auto& [name, p] : params) {
    auto it = values.find(name);
    if (it == values.end()) throw FormatError(what + " lacks parameter '" + name + "'");
    if (it->second.shape() != p->value.shape())
      throw FormatError(what + ": parameter '" + name + "' has shape " + shape_str(it->second.shape()) +
                        ", model expects " + shape_str(p->value.shape()));
    p->value = it->second;
  }
}

std::vector<std::string> sorted(const std::set<std::string>& s) { return {s.begin(), s.end()}; }

}  // namespace

nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j = {{"epoch", r.epoch}, {"lr", r.lr}, {"train_loss", r.train_loss}};
  j["val"] = r.val ? to_json(*r.val) : nlohmann::json(nullptr);
  return j;
}

EpochRecord epoch_record_from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.lr = j.at("lr").get<double>();
  r.train_loss = j.at("train_loss").get<double>();
  if (!j.at("val").is_null()) r.val = metrics_from_json(j.at("val"));
  return r;
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointState& s) {
  Archive a;
  a.kind = "checkpoint";
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : s.history) history.push_back(to_json(h));
  a.meta = {{"version", kCheckpointVersion},
            {"stage", to_string(s.stage)},
            {"subject", s.subject},
            {"epochs_completed", s.epochs_completed},
            {"total_epochs", s.total_epochs},
            {"scheduler", s.scheduler},
            {"optimizer_steps", s.optimizer_steps},
            {"seed", s.seed},
            {"config_digest", s.config_digest},
            {"history", history},
            {"best_epoch", s.best_epoch}};
  for (const auto& [k, t] : s.weights) a.tensors[kWeightPrefix + k] = t;
  for (const auto& [k, t] : s.best_weights) a.tensors[kBestPrefix + k] = t;
  for (const auto& [k, t] : s.optimizer) a.tensors[kOptimPrefix + k] = t;
  save_archive(path, a);
}

CheckpointState load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("checkpoint not found: " + path.string());
  const Archive a = load_archive(path, "checkpoint");
  const auto& m = a.meta;
  try {
    if (m.at("version").get<int>() != kCheckpointVersion)
      throw FormatError(path.string() + ": unsupported checkpoint version " + m.at("version").dump());
    CheckpointState s;
    s.stage = parse_stage(m.at("stage").get<std::string>());
    s.subject = m.at("subject").get<std::string>();
    s.epochs_completed = m.at("epochs_completed").get<int>();
    s.total_epochs = m.at("total_epochs").get<int>();
    s.scheduler = m.at("scheduler").get<std::string>();
    s.optimizer_steps = m.at("optimizer_steps").get<std::int64_t>();
    s.seed = m.at("seed").get<std::uint64_t>();
    s.config_digest = m.at("config_digest").get<std::string>();
    for (const auto& h : m.at("history")) s.history.push_back(epoch_record_from_json(h));
    s.best_epoch = m.at("best_epoch").get<int>();
    for (const auto& [k, t] : a.tensors) {
      auto strip = [&k](const std::string& p) { return k.rfind(p, 0) == 0 ? k.substr(p.size()) : std::string(); };
      if (auto n = strip(kWeightPrefix); !n.empty())
        s.weights.emplace(n, t);
      else if (auto b = strip(kBestPrefix); !b.empty())
        s.best_weights.emplace(b, t);
      else if (auto o = strip(kOptimPrefix); !o.empty())
        s.optimizer.emplace(o, t);
      else
        throw FormatError(path.string() + ": unexpected tensor '" + k + "'");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed checkpoint metadata: " + e.what());
  }
}

nlohmann::json StageReport::to_json() const {
  nlohmann::json h = nlohmann::json::array();
  for (const auto& r : history) h.push_back(hdff::to_json(r));
  return {{"stage", hdff::to_string(stage)},
          {"subject", subject},
          {"epochs", epochs},
          {"epochs_completed", epochs_completed},
          {"completed", completed},
          {"optimizer_steps", optimizer_steps},
          {"history", h},
          {"best_epoch", best_epoch},
          {"best", best ? hdff::to_json(*best) : nlohmann::json(nullptr)},
          {"trainable", trainable},
          {"frozen", frozen},
          {"seed", seed},
          {"config_digest", config_digest}};
}

StageReport StageReport::from_json(const nlohmann::json& j) {
  StageReport r;
  r.stage = parse_stage(j.at("stage").get<std::string>());
  r.subject = j.at("subject").get<std::string>();
  r.epochs = j.at("epochs").get<int>();
  r.epochs_completed = j.at("epochs_completed").get<int>();
  r.completed = j.at("completed").get<bool>();
  r.optimizer_steps = j.at("optimizer_steps").get<std::int64_t>();
  for (const auto& h : j.at("history")) r.history.push_back(epoch_record_from_json(h));
  r.best_epoch = j.at("best_epoch").get<int>();
  if (!j.at("best").is_null()) r.best = metrics_from_json(j.at("best"));
  r.trainable = j.at("trainable").get<std::vector<std::string>>();
  r.frozen = j.at("frozen").get<std::vector<std::string>>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_digest = j.at("config_digest").get<std::string>();
  return r;
}

Tensor stage_logits(const ModelComponents& components, FreezeMode mode, const Tensor& pixels) {
  return forward(components, mode, pixels, false);
}

StageReport run_stage(const StageConfig& config, const ModelComponents& c, const DataLoader& train,
                      const DataLoader* val, const StageOptions& options) {
  config.validate();
  const FreezeMode mode = config.freeze;
  require_layout(c, mode);
  if (train.num_records() == 0 && config.epochs > 0) throw Error("stage " + display_name(config.stage) + ": no training samples");

  const FreezeResult groups = apply_freeze(c, mode);
  const NamedParams trainable = collect_params(c, groups.trainable);
  const NamedParams everything = collect_params(c, all_groups(c));

  const std::int64_t batches = static_cast<std::int64_t>(train.num_batches());
  const std::int64_t total_units =
      config.scheduler.unit == StepUnit::kStep ? config.epochs * batches : static_cast<std::int64_t>(config.epochs);
  LrScheduler scheduler(config.scheduler, config.optimizer.lr, total_units);
  AdamW optimizer(config.optimizer);

  StageReport report;
  report.stage = config.stage;
  report.subject = options.subject;
  report.epochs = config.epochs;
  report.trainable = sorted(groups.trainable);
  report.frozen = sorted(groups.frozen);
  report.seed = config.seed;
  report.config_digest = options.config_digest;
  std::map<std::string, Tensor> best_weights;

  if (options.resume) {
    CheckpointState s = load_checkpoint(*options.resume);
    const std::string origin = options.resume->string();
    if (s.stage != config.stage)
      throw Error(origin + ": checkpoint is for stage " + display_name(s.stage) + ", not " + display_name(config.stage));
    if (s.subject != options.subject)
      throw Error(origin + ": checkpoint is for '" + s.subject + "', not '" + options.subject + "'");
    if (!options.config_digest.empty() && !s.config_digest.empty() && s.config_digest != options.config_digest)
      throw ConfigError(origin + ": checkpoint was written under a different configuration (digest " +
                        s.config_digest + ", current " + options.config_digest + ")");
    if (s.total_epochs != config.epochs || s.epochs_completed > config.epochs)
      throw ConfigError(origin + ": checkpoint expects " + std::to_string(s.total_epochs) + " epochs, config has " +
                        std::to_string(config.epochs));
    if (s.weights.size() != everything.size())
      throw FormatError(origin + ": checkpoint holds " + std::to_string(s.weights.size()) + " parameters, model has " +
                        std::to_string(everything.size()));
    assign(everything, s.weights, origin);
    scheduler = LrScheduler::deserialize(s.scheduler);
    Archive moments;
    moments.tensors = std::move(s.optimizer);
    optimizer.import_state(moments, "", s.optimizer_steps);
    best_weights = std::move(s.best_weights);
    report.history = std::move(s.history);
    report.best_epoch = s.best_epoch;
    report.epochs_completed = s.epochs_completed;
    spdlog::info("{} {}: resumed after epoch {}", display_name(config.stage), options.subject, s.epochs_completed);
  }

  const auto frozen_before = snapshot(c, groups.frozen);

  auto state = [&]() {
    CheckpointState s;
    s.stage = config.stage;
    s.subject = options.subject;
    s.epochs_completed = report.epochs_completed;
    s.total_epochs = config.epochs;
    s.scheduler = scheduler.serialize();
    s.optimizer_steps = optimizer.steps();
    s.seed = config.seed;
    s.config_digest = options.config_digest;
    s.history = report.history;
    s.best_epoch = report.best_epoch;
    s.weights = values_of(everything);
    s.best_weights = best_weights;
    Archive moments;
    optimizer.export_state(moments, "");
    s.optimizer = std::move(moments.tensors);
    return s;
  };
  if (!options.out_dir.empty()) std::filesystem::create_directories(options.out_dir);

  for (int e = report.epochs_completed; e < config.epochs; ++e) {
    EpochRecord rec;
    rec.epoch = e + 1;
    rec.lr = scheduler.lr();
    double loss_sum = 0.0;
    std::int64_t seen = 0;
    for (std::int64_t b = 0; b < batches; ++b) {
      const ImageBatch batch = train.batch(static_cast<std::uint64_t>(e), static_cast<std::size_t>(b));
      zero_grads(trainable);
      const Tensor logits = forward(c, mode, batch.pixels, true);
      const LossResult loss = cross_entropy(logits, batch.labels);
      if (!std::isfinite(loss.mean_loss)) {
        clear_caches(c);
        throw Error(fmt::format("{} {}: non-finite loss ({}) at epoch {} batch {} with lr {:.3g}; check the learning "
                                "rate and input data",
                                display_name(config.stage), options.subject, loss.mean_loss, e + 1, b + 1,
                                scheduler.lr()));
      }
      backward(c, mode, loss.grad);
      optimizer.step(trainable, scheduler.lr());
      if (scheduler.unit() == StepUnit::kStep) scheduler.advance();
      loss_sum += loss.mean_loss * static_cast<double>(batch.size());
      seen += batch.size();
    }
    clear_caches(c);
    if (scheduler.unit() == StepUnit::kEpoch) scheduler.advance();
    rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    if (val && val->num_records() > 0)
      rec.val = evaluate(*val, [&](const Tensor& px) { return forward(c, mode, px, false); });

    // Best validation accuracy, earliest epoch on ties; without validation
    // data the latest epoch wins.
    bool better = !rec.val || report.best_epoch == 0;
    if (!better) {
      const auto& prev = report.history[static_cast<std::size_t>(report.best_epoch - 1)].val;
      better = !prev || rec.val->accuracy > prev->accuracy;
    }
    if (better) {
      report.best_epoch = rec.epoch;
      best_weights = values_of(trainable);
    }
    spdlog::info("{} {}: epoch {}/{} lr {:.3e} loss {:.6f}{}", display_name(config.stage), options.subject, rec.epoch,
                 config.epochs, rec.lr, rec.train_loss,
                 rec.val ? fmt::format(" val_acc {:.4f}", rec.val->accuracy) : std::string());
    report.history.push_back(rec);
    report.epochs_completed = rec.epoch;
    if (!options.out_dir.empty()) save_checkpoint(options.out_dir / "last.ckpt", state());
    if (options.should_stop && rec.epoch < config.epochs &&
        options.should_stop({config.stage, options.subject, report.epochs_completed})) {
      report.optimizer_steps = optimizer.steps();
      spdlog::info("{} {}: stopped after epoch {}", display_name(config.stage), options.subject, rec.epoch);
      return report;
    }
  }

  if (report.best_epoch > 0) assign(trainable, best_weights, "best weights");
  std::vector<std::string> drifted;
  for (const auto& [name, before] : frozen_before)
    for (const auto& [n, p] : everything)
      if (n == name && !p->value.bitwise_equal(before)) drifted.push_back(name);
  if (!drifted.empty())
    throw InvariantError(fmt::format("{} {}: frozen parameters changed during the stage: {}",
                                     display_name(config.stage), options.subject, fmt::join(drifted, ", ")));

  report.completed = true;
  report.optimizer_steps = optimizer.steps();
  if (report.best_epoch > 0) report.best = report.history[static_cast<std::size_t>(report.best_epoch - 1)].val;
  if (!options.out_dir.empty()) {
    save_checkpoint(options.out_dir / "best.ckpt", state());
    write_file_atomic(options.out_dir / "report.json", report.to_json().dump(2) + "\n");
  }
  return report;
}

}  // namespace hdff
