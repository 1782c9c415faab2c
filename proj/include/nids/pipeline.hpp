#pragma once

// Staged pipeline: ingest -> balance -> rank -> select -> train -> evaluate
// -> report. Stages hand off through files in the output directory, so each
// subcommand can run on its own and the whole run can be repeated exactly.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "nids/boost.hpp"
#include "nids/eval.hpp"
#include "nids/ingest.hpp"
#include "nids/learners.hpp"
#include "nids/sampler.hpp"

namespace nids::pipeline {

inline constexpr const char* kVersion = "1.0.0";

struct DatasetConfig {
  ingest::Schema kind = ingest::Schema::Generic;
  std::filesystem::path path;
};

struct SelectConfig {
  double threshold = 0.9995;
  std::size_t step = 2;
  bool early_exit = false;
  bool reduced_cv = false;  // 3-fold CV inside the search
  std::vector<std::string> learners = {"RF", "DT", "KNN", "MLP"};
  std::size_t top_k = 0;  // > 0 skips the search and keeps this many ranked features
};

struct ScalabilityConfig {
  bool enabled = false;
  std::vector<std::size_t> epochs = {125, 200};
  double tolerance_pp = 0.5;
  std::string learner = "MLP";
};

struct PipelineConfig {
  DatasetConfig dataset;
  ingest::Task task = ingest::Task::Binary;
  std::uint64_t seed = 42;
  std::size_t threads = 0;
  std::size_t sample_rows = 0;  // 0 keeps every row
  std::filesystem::path output = "nids-out";

  sampler::SmoteConfig smote;
  boost::GBConfig boost;
  SelectConfig select;
  eval::FoldSpec folds;
  std::size_t knn_sample = 0;
  std::vector<learners::LearnerSpec> learners;
  ScalabilityConfig scalability;

  /// Field paths set explicitly (file or flag); seeds not listed here follow `seed`.
  std::set<std::string> explicit_keys;

  /// Throws a config error "<field.path>: <problem>".
  void validate() const;
  /// Copies the global seed into every seed that was not set explicitly.
  void apply_seed_defaults();
  /// Configured spec for `name`, or the default one.
  learners::LearnerSpec learner(const std::string& name) const;
};

PipelineConfig default_config();
/// Parses TOML text. Relative dataset paths resolve against `base_dir`.
PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {},
                            std::string_view source = "<config>");
PipelineConfig load_config(const std::filesystem::path& path);

/// Effective configuration without run-local settings (output dir, threads).
nlohmann::ordered_json config_to_json(const PipelineConfig& cfg);

// ---------------------------------------------------------------------------
// synthetic data

struct SynthSpec {
  std::vector<std::size_t> class_counts = {500, 500};
  std::size_t informative = 3;
  std::size_t noise = 7;
  double separation = 6.0;  // distance between class centres per informative axis, in std units
  std::uint64_t seed = 42;
};

/// Gaussian classes separable on the informative columns plus pure-noise
/// columns, as generic-schema CSV text (header, label last, shuffled rows).
std::string generate_synthetic(const SynthSpec& spec);
void write_synthetic(const SynthSpec& spec, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// stages

enum class Stage { Ingest, Balance, Rank, Select, Train, Evaluate, Report };

const char* to_string(Stage stage);
Stage parse_stage(std::string_view name);
const std::vector<Stage>& all_stages();

/// Exclusive lock on the output directory for the lifetime of the object.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// Runs one stage. Failures write a STALE marker and are rethrown with the
/// stage name attached. Takes the output lock unless `locked` is set.
void run_stage(Stage stage, const PipelineConfig& cfg, bool locked = false);
/// Runs every stage in order under one lock.
void run_pipeline(const PipelineConfig& cfg);

/// manifest.json with the "run" section (timings, output dir) removed.
nlohmann::ordered_json stable_manifest(const std::filesystem::path& output_dir);

}  // namespace nids::pipeline
