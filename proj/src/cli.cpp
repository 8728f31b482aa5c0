// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/cli.hpp"

#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "hdff/ablation.hpp"
#include "hdff/config.hpp"
#include "hdff/metrics.hpp"
#include "hdff/pipeline.hpp"
#include "hdff/synth.hpp"

namespace hdff {

namespace {

struct Args {
  std::string config;
  std::string stage;
  std::string backbone;
  std::string resume;
  std::string checkpoint;
  std::string manifest;
  std::string out;
  std::string axis;
  std::string split = "all";
  int workers = 1;
  std::string synth_kind = "forgery";
  SynthOptions synth;
  bool quiet = false;
};

void log_to(const std::filesystem::path& file, bool quiet) {
  std::vector<spdlog::sink_ptr> sinks;
  auto console = std::make_shared<spdlog::sinks::stderr_color_sink_mt>();
  console->set_level(quiet ? spdlog::level::warn : spdlog::level::info);
  sinks.push_back(console);
  if (!file.empty()) {
    std::filesystem::create_directories(file.parent_path());
    sinks.push_back(std::make_shared<spdlog::sinks::basic_file_sink_mt>(file.string()));
  }
  auto logger = std::make_shared<spdlog::logger>("hdff", sinks.begin(), sinks.end());
  logger->set_level(spdlog::level::info);
  spdlog::set_default_logger(logger);
}

RunConfig load_for_resume(const Args& a, PipelineOptions& opts) {
  std::filesystem::path run_dir = a.resume;
  if (!std::filesystem::exists(run_dir)) throw Error("resume path not found: " + run_dir.string());
  if (std::filesystem::is_regular_file(run_dir)) {
    // <run>/stages/<subject>/<stage>/last.ckpt
    const CheckpointState s = load_checkpoint(run_dir);
    if (a.stage.empty()) opts.only_stage = s.stage;
    run_dir = std::filesystem::absolute(run_dir).parent_path().parent_path().parent_path().parent_path();
  }
  RunConfig cfg = parse_config(a.config.empty() ? run_dir / "config.resolved.toml" : std::filesystem::path(a.config));
  cfg.run_dir = std::filesystem::absolute(run_dir).lexically_normal();
  opts.resume = true;
  return cfg;
}

int cmd_budget(const Args& a, std::ostream& out) {
  const RunConfig cfg = parse_config(a.config);
  const BudgetReport report = config_budget(cfg);
  out << report.table();
  if (!report.pass) throw Error(fmt::format("parameter budget exceeded by {}", -report.headroom));
  return 0;
}

int cmd_train(const Args& a, std::ostream& out) {
  PipelineOptions opts;
  RunConfig cfg;
  if (!a.resume.empty()) {
    cfg = load_for_resume(a, opts);
  } else {
    cfg = parse_config(a.config);
  }
  if (!a.stage.empty()) {
    const StageId s = parse_stage(a.stage);
    if (s == StageId::kInit) throw ConfigError("--stage must be selective, full or fusion");
    opts.only_stage = s;
  }
  if (!a.backbone.empty()) {
    if (std::find(cfg.backbones.begin(), cfg.backbones.end(), a.backbone) == cfg.backbones.end())
      throw ConfigError("--backbone " + a.backbone + " is not listed in the config");
    if (opts.only_stage == StageId::kFusionTrain) throw ConfigError("--backbone cannot be combined with --stage fusion");
    opts.only_backbone = a.backbone;
  }
  log_to(cfg.run_dir / "train.log", a.quiet);
  spdlog::info("run directory {}", cfg.run_dir.string());
  const PipelineResult result = run_pipeline(cfg, opts);
  out << result.summary.dump(2) << "\n";
  return 0;
}

std::vector<ManifestRecord> records_for(const Args& a) {
  auto records = load_manifest(a.manifest);
  if (a.split == "all") return records;
  return select_split(records, parse_split(a.split));
}

int cmd_predict(const Args& a, std::ostream& out) {
  GrandModel model = GrandModel::load(a.checkpoint);
  const auto records = records_for(a);
  if (records.empty()) throw Error("no records to predict in " + a.manifest);
  write_predictions(model, records, a.workers, a.out);
  out << fmt::format("wrote {} predictions to {}\n", records.size(), a.out);
  return 0;
}

int cmd_eval(const Args& a, std::ostream& out) {
  GrandModel model = GrandModel::load(a.checkpoint);
  std::vector<ManifestRecord> labeled;
  for (auto& r : records_for(a))
    if (r.label != kUnlabeled) labeled.push_back(std::move(r));
  LoaderOptions o;
  o.batch_size = 64;
  o.input_size = model.input_size();
  o.shuffle = false;
  o.workers = a.workers;
  const Metrics m = evaluate(DataLoader(labeled, o), [&](const Tensor& px) { return model.logits(px); });
  out << to_json(m).dump(2) << "\n";
  return 0;
}

int cmd_ablate(const Args& a, std::ostream& out) {
  const RunConfig cfg = parse_config(a.config);
  log_to({}, a.quiet);
  AblationReport report;
  if (a.axis == "scheduler")
    report = ablate_scheduler(cfg);
  else
    report = ablate_finetune_depth(cfg);
  write_report(report, a.out);
  out << report.table();
  return 0;
}

int cmd_synth(const Args& a, std::ostream& out) {
  SynthOptions o = a.synth;
  o.kind = parse_synth_kind(a.synth_kind);
  const auto records = write_synth_dataset(o, a.out);
  out << fmt::format("wrote {} images and {}\n", records.size(), (std::filesystem::path(a.out) / "manifest.csv").string());
  return 0;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

int dispatch(const std::vector<std::string>& raw, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical deep fusion training and evaluation", "hdff"};
  app.require_subcommand(1, 1);
  Args a;
  app.add_flag("-q,--quiet", a.quiet, "Only log warnings and errors");
  app.fallthrough();

  auto* budget = app.add_subcommand("budget", "Print the parameter budget table for a config");
  budget->add_option("--config", a.config, "Run config")->required();

  auto* train = app.add_subcommand("train", "Run the staged training pipeline");
  train->add_option("--config", a.config, "Run config");
  train->add_option("--stage", a.stage, "Only run this stage")->check(CLI::IsMember({"selective", "full", "fusion"}));
  train->add_option("--backbone", a.backbone, "Only train this backbone");
  train->add_option("--resume", a.resume, "Run directory or last.ckpt to continue from");

  auto* predict = app.add_subcommand("predict", "Write fake probabilities for a manifest");
  predict->add_option("--checkpoint", a.checkpoint, "Grand model directory")->required();
  predict->add_option("--manifest", a.manifest, "Manifest CSV")->required();
  predict->add_option("--out", a.out, "Output CSV")->required();
  predict->add_option("--split", a.split, "train, val, test or all")->capture_default_str();
  predict->add_option("--workers", a.workers, "Loader threads")->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "Evaluate a grand model on labeled manifest rows");
  eval->add_option("--checkpoint", a.checkpoint, "Grand model directory")->required();
  eval->add_option("--manifest", a.manifest, "Manifest CSV")->required();
  eval->add_option("--split", a.split, "train, val, test or all")->capture_default_str();
  eval->add_option("--workers", a.workers, "Loader threads")->check(CLI::PositiveNumber);

  auto* ablate = app.add_subcommand("ablate", "Run a scheduler or fine-tuning depth ablation");
  ablate->add_option("--config", a.config, "Run config")->required();
  ablate->add_option("--axis", a.axis, "scheduler or finetune_depth")
      ->required()
      ->check(CLI::IsMember({"scheduler", "finetune_depth"}));
  ablate->add_option("--out", a.out, "Report directory")->required();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--kind", a.synth_kind, "forgery, xor or or")->capture_default_str();
  synth->add_option("--out", a.out, "Output directory")->required();
  synth->add_option("--train", a.synth.train, "Train images")->capture_default_str();
  synth->add_option("--val", a.synth.val, "Validation images")->capture_default_str();
  synth->add_option("--test", a.synth.test, "Test images")->capture_default_str();
  synth->add_option("--size", a.synth.size, "Image side")->capture_default_str();
  synth->add_option("--seed", a.synth.seed, "Seed")->capture_default_str();
  synth->add_option("--amplitude", a.synth.amplitude, "Patch amplitude")->capture_default_str();

  std::vector<std::string> args(raw.rbegin(), raw.rend());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "hdff: " << e.what() << "\n" << app.help();
    return static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (train->parsed() && a.config.empty() && a.resume.empty())
      throw ConfigError("train needs --config or --resume");
    if (budget->parsed()) return cmd_budget(a, out);
    if (train->parsed()) return cmd_train(a, out);
    if (predict->parsed()) return cmd_predict(a, out);
    if (eval->parsed()) return cmd_eval(a, out);
    if (ablate->parsed()) return cmd_ablate(a, out);
    if (synth->parsed()) return cmd_synth(a, out);
  } catch (const ConfigError& e) {
    err << "hdff: config error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kUsage);
  } catch (const std::exception& e) {
    err << "hdff: error: " << first_line(e.what()) << "\n";
    return static_cast<int>(ExitCode::kRuntime);
  }
  return static_cast<int>(ExitCode::kUsage);
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace hdff
