// nids command line: staged NIDS pipeline plus a synthetic data generator.

#include <cstdlib>
#include <iostream>
#include <optional>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "nids/error.hpp"
#include "nids/parallel.hpp"
#include "nids/pipeline.hpp"

using namespace nids;
using namespace nids::pipeline;

namespace {

// Flag values that override config keys. Unset options leave the config alone.
struct Overrides {
  std::string config;
  std::optional<std::string> dataset, kind, task, out, scope, learners_csv, select_learners_csv;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads, sample_rows, folds, step, top_k, knn_sample, smote_k, rounds;
  std::optional<double> threshold;
  bool stratified = false, quantile = false, early_exit = false, reduced_cv = false, scalability = false;
  bool unstratified_folds = false;
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = s.find(',', start);
    const auto piece = s.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!piece.empty()) out.push_back(piece);
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

void add_overrides(CLI::App* app, Overrides& o) {
  app->add_option("-c,--config", o.config, "TOML config file");
  app->add_option("--dataset", o.dataset, "input CSV (dataset.path)");
  app->add_option("--kind", o.kind, "dataset schema: kdd|malmem|generic");
  app->add_option("--task", o.task, "binary|multilabel");
  app->add_option("-o,--out", o.out, "output directory");
  app->add_option("--seed", o.seed, "global seed");
  app->add_option("--threads", o.threads, "worker thread cap (also NIDS_THREADS)");
  app->add_option("--sample-rows", o.sample_rows, "stratified subsample of N prepared rows");
  app->add_flag("--stratified", o.stratified, "with --sample-rows: keep class proportions (always on)");
  app->add_option("--smote-k", o.smote_k, "SMOTE neighbours");
  app->add_option("--rounds", o.rounds, "boosting rounds");
  app->add_flag("--quantile", o.quantile, "quantile split candidates for boosting");
  app->add_option("--scope", o.scope, "global-smote|train-only");
  app->add_option("--folds", o.folds, "cross-validation folds");
  app->add_flag("--unstratified", o.unstratified_folds, "plain shuffled folds");
  app->add_option("--threshold", o.threshold, "selection accuracy threshold in (0,1]");
  app->add_option("--step", o.step, "prefix size decrement");
  app->add_flag("--early-exit", o.early_exit, "evaluate prefixes from small k upward and stop at the first pass");
  app->add_flag("--reduced-cv", o.reduced_cv, "3-fold CV inside the selection search");
  app->add_option("--top-k", o.top_k, "skip the search and keep the top K ranked features");
  app->add_option("--knn-sample", o.knn_sample, "cap the KNN reference set (stratified)");
  app->add_option("--learners", o.learners_csv, "comma separated learners to train and evaluate");
  app->add_option("--select-learners", o.select_learners_csv, "comma separated learners used by the selection search");
  app->add_flag("--scalability", o.scalability, "run the epoch scalability check during evaluate");
}

PipelineConfig build_config(const Overrides& o) {
  PipelineConfig cfg = o.config.empty() ? default_config() : load_config(o.config);
  auto& keys = cfg.explicit_keys;
  auto mark = [&](const char* key) { keys.insert(key); };
  if (o.dataset) cfg.dataset.path = *o.dataset, mark("dataset.path");
  if (o.kind) cfg.dataset.kind = ingest::parse_schema(*o.kind), mark("dataset.kind");
  if (o.task) cfg.task = ingest::parse_task(*o.task), mark("task");
  if (o.out) cfg.output = *o.out, mark("output");
  if (o.threads) cfg.threads = *o.threads, mark("threads");
  if (o.sample_rows) cfg.sample_rows = *o.sample_rows, mark("sample_rows");
  if (o.smote_k) cfg.smote.k_neighbors = *o.smote_k, mark("smote.k_neighbors");
  if (o.rounds) cfg.boost.n_rounds = *o.rounds, mark("boost.n_rounds");
  if (o.quantile) cfg.boost.split_mode = boost::SplitMode::Quantile, mark("boost.split");
  if (o.scope) cfg.folds.scope = eval::parse_scope(*o.scope), mark("eval.scope");
  if (o.folds) cfg.folds.n_folds = *o.folds, mark("eval.folds");
  if (o.unstratified_folds) cfg.folds.stratified = false, mark("eval.stratified");
  if (o.threshold) cfg.select.threshold = *o.threshold, mark("select.threshold");
  if (o.step) cfg.select.step = *o.step, mark("select.step");
  if (o.early_exit) cfg.select.early_exit = true, mark("select.early_exit");
  if (o.reduced_cv) cfg.select.reduced_cv = true, mark("select.reduced_cv");
  if (o.top_k) cfg.select.top_k = *o.top_k, mark("select.top_k");
  if (o.knn_sample) cfg.knn_sample = *o.knn_sample, mark("eval.knn_sample");
  if (o.scalability) cfg.scalability.enabled = true, mark("scalability.enabled");
  if (o.select_learners_csv) cfg.select.learners = split_csv(*o.select_learners_csv), mark("select.learners");
  if (o.learners_csv) {
    std::vector<learners::LearnerSpec> specs;
    for (const auto& name : split_csv(*o.learners_csv)) specs.push_back(cfg.learner(name));
    cfg.learners = std::move(specs);
    mark("learners.names");
  }
  if (o.seed) {
    cfg.seed = *o.seed;
    mark("seed");
  }
  cfg.apply_seed_defaults();
  cfg.validate();
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"Network intrusion detection pipeline: ingest, balance, rank, select, train, evaluate, report"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");
  app.add_flag("-q,--quiet", quiet, "warnings and errors only");
  // Global flags may follow the subcommand.
  app.fallthrough();

  Overrides o;
  std::vector<std::pair<CLI::App*, std::optional<Stage>>> pipeline_cmds;
  auto* run_cmd = app.add_subcommand("run", "run every stage in order");
  add_overrides(run_cmd, o);
  pipeline_cmds.emplace_back(run_cmd, std::nullopt);
  const std::pair<Stage, const char*> stages[] = {
      {Stage::Ingest, "load, clean, encode and standardize the dataset"},
      {Stage::Balance, "SMOTE oversampling (skipped when already balanced)"},
      {Stage::Rank, "train the boosted ensemble and rank features by gain"},
      {Stage::Select, "pick the smallest ranked prefix that clears the threshold"},
      {Stage::Train, "fit the configured learners on the selected features"},
      {Stage::Evaluate, "k-fold cross-validation of every learner"},
      {Stage::Report, "write metrics, confusion, ROC CSVs and the manifest"},
  };
  for (const auto& [stage, help] : stages) {
    auto* cmd = app.add_subcommand(to_string(stage), help);
    add_overrides(cmd, o);
    pipeline_cmds.emplace_back(cmd, stage);
  }

  SynthSpec synth;
  std::string synth_out;
  std::string synth_counts = "500,500";
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset in the generic CSV schema");
  synth_cmd->add_option("-o,--out", synth_out, "output CSV path")->required();
  synth_cmd->add_option("--classes", synth_counts, "comma separated rows per class");
  synth_cmd->add_option("--informative", synth.informative, "informative columns");
  synth_cmd->add_option("--noise", synth.noise, "pure-noise columns");
  synth_cmd->add_option("--separation", synth.separation, "class centre spacing in std units");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");

  if (synth_cmd->parsed()) {
    synth.class_counts.clear();
    for (const auto& c : split_csv(synth_counts)) {
      try {
        synth.class_counts.push_back(std::stoul(c));
      } catch (const std::exception&) {
        fail(ErrorKind::Config, "--classes: '" + c + "' is not a row count");
      }
    }
    write_synthetic(synth, synth_out);
    spdlog::info("synth: wrote {}", synth_out);
    return 0;
  }

  for (const auto& [cmd, stage] : pipeline_cmds) {
    if (!cmd->parsed()) continue;
    const auto cfg = build_config(o);
    if (stage) {
      run_stage(*stage, cfg);
    } else {
      run_pipeline(cfg);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    spdlog::error("{}: {}", to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("stage failure: {}", e.what());
    return 4;
  }
}
