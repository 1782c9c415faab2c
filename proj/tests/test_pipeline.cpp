#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <unistd.h>

#include "doctest.h"
#include "nids/digest.hpp"
#include "nids/pipeline.hpp"
#include "nids/select.hpp"

using namespace nids;
using namespace nids::pipeline;
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("nids_test_pipeline_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::Internal;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

ingest::Dataset load_synthetic(const SynthSpec& spec, const fs::path& dir) {
  write_synthetic(spec, dir / "synth.csv");
  const auto raw = ingest::load_csv(dir / "synth.csv", ingest::Schema::Generic);
  return ingest::prepare(raw, ingest::Schema::Generic, {}).data;
}

// Small, fast end-to-end configuration on an imbalanced synthetic set.
PipelineConfig small_config(const fs::path& dir, const fs::path& out) {
  SynthSpec spec;
  spec.class_counts = {120, 60};
  spec.informative = 2;
  spec.noise = 3;
  write_synthetic(spec, dir / "data.csv");
  const auto text = R"(
seed = 7
[dataset]
kind = "generic"
path = "data.csv"
[boost]
n_rounds = 8
max_depth = 3
[select]
threshold = 0.9
learners = ["DT", "KNN"]
[eval]
folds = 3
[learners]
names = ["DT", "KNN", "RF"]
[learners.RF]
n_trees = 5
)";
  auto cfg = parse_config(text, dir);
  cfg.output = out;
  cfg.validate();
  return cfg;
}

}  // namespace

TEST_CASE("config: defaults and explicit keys") {
  auto cfg = parse_config("[dataset]\npath = \"x.csv\"\n", "/data");
  CHECK(cfg.dataset.path == fs::path("/data/x.csv"));
  CHECK(cfg.select.threshold == 0.9995);
  CHECK(cfg.select.step == 2);
  CHECK(cfg.folds.n_folds == 10);
  CHECK(cfg.learners.size() == 5);
  CHECK(cfg.explicit_keys == std::set<std::string>{"dataset.path"});
  cfg.validate();

  cfg = parse_config("seed = 9\n[smote]\nseed = 3\n[dataset]\npath = \"/abs.csv\"\n", "/data");
  CHECK(cfg.dataset.path == fs::path("/abs.csv"));
  CHECK(cfg.smote.seed == 3);
  CHECK(cfg.folds.seed == 9);
  CHECK(std::get<learners::RFConfig>(cfg.learner("RF").config).seed == 9);

  cfg = parse_config("[learners]\nnames = [\"DT\"]\n[learners.DT]\nmax_depth = 0\n");
  REQUIRE(cfg.learners.size() == 1);
  CHECK_FALSE(std::get<learners::DTConfig>(cfg.learners[0].config).max_depth.has_value());
}

TEST_CASE("config: every violation names its field") {
  auto err = [](const std::string& text) {
    try {
      parse_config("[dataset]\npath = \"x.csv\"\n" + text).validate();
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Config);
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(err("[select]\nthreshold = 0.0\n").starts_with("select.threshold:"));
  CHECK(err("[select]\nthreshold = 1.5\n").starts_with("select.threshold:"));
  CHECK(err("[select]\nthreshold = 1\n") == "no error");
  CHECK(err("[select]\nstep = 0\n").starts_with("select.step:"));
  CHECK(err("[select]\nbogus = 1\n").starts_with("select.bogus:"));
  CHECK(err("[eval]\nfolds = 1\n").starts_with("eval.folds:"));
  CHECK(err("[eval]\nscope = \"sideways\"\n").starts_with("eval.scope:"));
  CHECK(err("[boost]\neta = 0.0\n").starts_with("boost"));
  CHECK(err("[boost]\nsplit = \"fast\"\n").starts_with("boost.split:"));
  CHECK(err("[smote]\nk_neighbors = 0\n").starts_with("smote.k_neighbors:"));
  CHECK(err("[smote]\nk_neighbors = \"five\"\n").starts_with("smote.k_neighbors:"));
  CHECK(err("[learners]\nnames = [\"SVM\"]\n").starts_with("learners.names:"));
  CHECK(err("[learners.MLP]\nmomentum = 1.0\n").starts_with("learners.MLP.momentum:"));
  CHECK(err("[learners.RF]\nn_trees = 0\n").starts_with("learners.RF.n_trees:"));
  CHECK(err("[scalability]\nenabled = true\nlearner = \"RF\"\n").starts_with("scalability.learner:"));
  CHECK(message_of([] { parse_config("task = \"multilabel\"\n[dataset]\nkind = \"malmem\"\npath = \"m.csv\"").validate(); })
            .starts_with("task:"));
  CHECK(parse_config("task = \"multilabel\"\n[dataset]\nkind = \"kdd\"\npath = \"k.csv\"").task == ingest::Task::Multilabel);
  CHECK(message_of([] { parse_config("").validate(); }).starts_with("dataset.path:"));
  CHECK(message_of([] { parse_config("seed = = 3", {}, "run.toml"); }).starts_with("run.toml:1:"));
  CHECK(kind_of([] { load_config("/nonexistent/run.toml"); }) == ErrorKind::Config);
}

TEST_CASE("synthetic generator") {
  SynthSpec spec;
  CHECK(generate_synthetic(spec) == generate_synthetic(spec));
  SynthSpec other = spec;
  other.seed = 43;
  CHECK(generate_synthetic(spec) != generate_synthetic(other));

  const auto text = generate_synthetic(spec);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1001);
  CHECK(text.substr(0, text.find('\n')) == "inf0,inf1,inf2,noise3,noise4,noise5,noise6,noise7,noise8,noise9,label");

  SynthSpec bad = spec;
  bad.class_counts = {10};
  CHECK_THROWS_AS(generate_synthetic(bad), Error);
  bad = spec;
  bad.informative = 0;
  CHECK_THROWS_AS(generate_synthetic(bad), Error);
}

TEST_CASE("synthetic: RF 10-fold accuracy on 500 x 2 with 3 informative and 7 noise columns") {
  const auto dir = scratch("synth_rf");
  const auto data = load_synthetic(SynthSpec{}, dir);
  REQUIRE(data.n_rows() == 1000);
  std::vector<std::size_t> all(data.n_features());
  std::iota(all.begin(), all.end(), 0);
  const auto r = eval::run_cv(data, learners::default_learner("RF", 42), all, {});
  CHECK(r.folds.size() == 10);
  CHECK(r.mean.accuracy >= 0.99);
}

TEST_CASE("synthetic: without noise every ranked feature is informative with positive gain") {
  const auto dir = scratch("synth_rank");
  SynthSpec spec;
  spec.noise = 0;
  spec.separation = 1.0;
  const auto data = load_synthetic(spec, dir);
  boost::GBConfig gb;
  gb.n_rounds = 20;
  gb.max_depth = 3;
  const auto ranking = boost::feature_importance(boost::train_boosted(data, gb));
  REQUIRE(ranking.order.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(data.feature_names()[ranking.order[i]].starts_with("inf"));
    CHECK(ranking.gains[i] > 0.0);
  }
}

TEST_CASE("pipeline: staged and monolithic runs agree byte for byte") {
  const auto dir = scratch("staged");
  const auto mono = small_config(dir, dir / "mono");
  run_pipeline(mono);
  auto staged = mono;
  staged.output = dir / "staged";
  for (auto stage : all_stages()) run_stage(stage, staged);

  for (const char* f : {"metrics.csv", "selection.csv", "ranking.json", "report.json", "confusion_RF.csv", "roc_DT.csv"}) {
    CHECK_MESSAGE(slurp(dir / "mono" / f) == slurp(dir / "staged" / f), f);
  }
  CHECK(stable_manifest(dir / "mono") == stable_manifest(dir / "staged"));

  // Every emitted file appears in the manifest with its hash.
  const auto manifest = stable_manifest(dir / "mono");
  const auto& files = manifest.at("files");
  std::size_t seen = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "mono")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "mono").generic_string();
    if (rel == "manifest.json" || rel == "timings.json") continue;
    REQUIRE_MESSAGE(files.contains(rel), rel);
    CHECK(files.at(rel).get<std::string>() == sha256_file(e.path()));
    ++seen;
  }
  CHECK(seen == files.size());
  CHECK_FALSE(fs::exists(dir / "mono" / ".lock"));
  CHECK_FALSE(fs::exists(dir / "mono" / "STALE"));

  // Imbalanced input: SMOTE ran and filled the minority class.
  CHECK(manifest.at("stages").at("balance").at("skipped") == false);
  CHECK(manifest.at("stages").at("balance").at("rows_after") == 240);
  CHECK(manifest.at("config").at("dataset").at("path") == "data.csv");
  CHECK(manifest.at("levers").at("scope") == "global");
}

TEST_CASE("pipeline: reruns are deterministic") {
  const auto dir = scratch("rerun");
  auto cfg = small_config(dir, dir / "a");
  run_pipeline(cfg);
  const auto first_metrics = slurp(dir / "a" / "metrics.csv");
  const auto first_manifest = stable_manifest(dir / "a");
  fs::remove_all(dir / "a");
  cfg.threads = 1;
  run_pipeline(cfg);
  CHECK(slurp(dir / "a" / "metrics.csv") == first_metrics);
  CHECK(stable_manifest(dir / "a") == first_manifest);

  cfg.output = dir / "b";
  cfg.seed = 8;
  cfg.explicit_keys.clear();
  cfg.apply_seed_defaults();
  run_pipeline(cfg);
  CHECK(stable_manifest(dir / "b").at("content_hash") != first_manifest.at("content_hash"));
}

TEST_CASE("pipeline: ordering, locking and stale markers") {
  const auto dir = scratch("ordering");
  auto cfg = small_config(dir, dir / "out");
  const auto msg = message_of([&] { run_stage(Stage::Select, cfg); });
  CHECK(msg.find("stage select") != std::string::npos);
  CHECK(msg.find("run balance first") != std::string::npos);
  CHECK(kind_of([&] { run_stage(Stage::Report, cfg); }) == ErrorKind::Ordering);
  CHECK(fs::exists(dir / "out" / "STALE"));

  run_stage(Stage::Ingest, cfg);
  run_stage(Stage::Balance, cfg);
  CHECK(kind_of([&] { run_stage(Stage::Select, cfg); }) == ErrorKind::Ordering);
  run_stage(Stage::Rank, cfg);
  run_stage(Stage::Select, cfg);
  CHECK_FALSE(fs::exists(dir / "out" / "STALE"));
  CHECK(kind_of([&] { run_stage(Stage::Report, cfg); }) == ErrorKind::Ordering);

  {
    OutputLock held(cfg.output);
    CHECK(kind_of([&] { run_stage(Stage::Train, cfg); }) == ErrorKind::Stage);
    CHECK(kind_of([&] { OutputLock again(cfg.output); }) == ErrorKind::Stage);
  }
  run_stage(Stage::Train, cfg);

  // Changing the ranked dataset invalidates the ranking.
  auto other = cfg;
  other.sample_rows = 100;
  run_stage(Stage::Ingest, other);
  run_stage(Stage::Balance, other);
  CHECK(message_of([&] { run_stage(Stage::Select, other); }).find("run rank again") != std::string::npos);

  auto missing = cfg;
  missing.dataset.path = dir / "absent.csv";
  CHECK(kind_of([&] { run_stage(Stage::Ingest, missing); }) == ErrorKind::Parse);
  CHECK(json::parse(slurp(dir / "out" / "STALE")).at("stage") == "ingest");
}

TEST_CASE("pipeline: report rebuilds from fold outputs without retraining") {
  const auto dir = scratch("report");
  auto cfg = small_config(dir, dir / "out");
  run_pipeline(cfg);
  const auto metrics = slurp(dir / "out" / "metrics.csv");
  const auto folds_time = fs::last_write_time(dir / "out" / "folds" / "RF.json");
  fs::remove(dir / "out" / "metrics.csv");
  fs::remove_all(dir / "out" / "models");
  run_stage(Stage::Report, cfg);
  CHECK(slurp(dir / "out" / "metrics.csv") == metrics);
  CHECK(fs::last_write_time(dir / "out" / "folds" / "RF.json") == folds_time);
  CHECK_FALSE(fs::exists(dir / "out" / "models"));
}

TEST_CASE("pipeline: balanced input skips SMOTE, train-only scope defers it") {
  const auto dir = scratch("balanced");
  auto cfg = small_config(dir, dir / "bal");
  SynthSpec spec;
  spec.class_counts = {90, 90};
  spec.informative = 2;
  spec.noise = 2;
  write_synthetic(spec, dir / "even.csv");
  cfg.dataset.path = dir / "even.csv";
  run_stage(Stage::Ingest, cfg);
  run_stage(Stage::Balance, cfg);
  const auto state = json::parse(slurp(dir / "bal" / "stages.json"));
  CHECK(state.at("balance").at("reason") == "balanced, skipped (90 vs 90)");

  auto to = small_config(dir, dir / "train_only");
  to.folds.scope = eval::Scope::TrainOnly;
  to.scalability.enabled = true;
  to.scalability.epochs = {2, 4};
  run_pipeline(to);
  const auto m = stable_manifest(dir / "train_only");
  CHECK(m.at("stages").at("balance").at("skipped") == true);
  CHECK(m.at("stages").at("ingest").at("scaled") == false);
  CHECK(m.at("levers").at("scope") == "train-only");
  CHECK(fs::exists(dir / "train_only" / "scalability.json"));
  const auto metrics = slurp(dir / "train_only" / "metrics.csv");
  CHECK(metrics.find(",train-only,") != std::string::npos);
}

TEST_CASE("pipeline: fixed top-k and stage names") {
  const auto dir = scratch("topk");
  auto cfg = small_config(dir, dir / "out");
  cfg.select.top_k = 3;
  run_pipeline(cfg);
  const auto sel = select::selection_from_json(json::parse(slurp(dir / "out" / "selection.json")));
  CHECK(sel.chosen.size() == 3);
  CHECK(slurp(dir / "out" / "metrics.csv").find(",top-3,3,") != std::string::npos);
  cfg.select.top_k = 99;
  CHECK(kind_of([&] { run_stage(Stage::Select, cfg); }) == ErrorKind::Config);

  for (auto s : all_stages()) CHECK(parse_stage(to_string(s)) == s);
  CHECK_THROWS_AS(parse_stage("deploy"), Error);
}
