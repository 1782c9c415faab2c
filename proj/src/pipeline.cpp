#include "nids/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "nids/digest.hpp"
#include "nids/error.hpp"
#include "nids/parallel.hpp"
#include "nids/random.hpp"
#include "nids/select.hpp"

namespace nids::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const char* to_string(Stage stage) {
  switch (stage) {
    case Stage::Ingest: return "ingest";
    case Stage::Balance: return "balance";
    case Stage::Rank: return "rank";
    case Stage::Select: return "select";
    case Stage::Train: return "train";
    case Stage::Evaluate: return "evaluate";
    case Stage::Report: return "report";
  }
  return "?";
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages = {Stage::Ingest, Stage::Balance,  Stage::Rank,  Stage::Select,
                                            Stage::Train,  Stage::Evaluate, Stage::Report};
  return stages;
}

Stage parse_stage(std::string_view name) {
  for (auto s : all_stages()) {
    if (name == to_string(s)) return s;
  }
  fail(ErrorKind::Config, "unknown stage '" + std::string(name) + "'");
}

namespace {

constexpr const char* kLock = ".lock";
constexpr const char* kStale = "STALE";
constexpr const char* kTimings = "timings.json";
constexpr const char* kState = "stages.json";

json read_json(const fs::path& path, const std::string& upstream = {}) {
  std::ifstream in(path);
  if (!in) {
    if (!upstream.empty()) fail(ErrorKind::Ordering, path.filename().string() + " not found; run " + upstream + " first");
    fail(ErrorKind::Stage, "cannot read " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorKind::Stage, "cannot write " + path.string());
    out << text;
    if (!out) fail(ErrorKind::Stage, "short write to " + path.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

ingest::Dataset need_dataset(const fs::path& stem, const std::string& upstream) {
  if (!ingest::dataset_exists(stem)) {
    fail(ErrorKind::Ordering, stem.filename().string() + " dataset not found; run " + upstream + " first");
  }
  return ingest::read_dataset(stem);
}

void update_state(const fs::path& dir, Stage stage, json record) {
  json state = fs::exists(dir / kState) ? read_json(dir / kState) : json::object();
  state[to_string(stage)] = std::move(record);
  // Keep stage order stable regardless of execution order.
  json ordered = json::object();
  for (auto s : all_stages()) {
    if (state.contains(to_string(s))) ordered[to_string(s)] = state[to_string(s)];
  }
  write_json(dir / kState, ordered);
}

json class_counts_json(const ingest::Dataset& d) {
  json out = json::object();
  const auto counts = d.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) out[d.class_names()[c]] = counts[c];
  return out;
}

std::vector<learners::LearnerSpec> selection_specs(const PipelineConfig& cfg) {
  std::vector<learners::LearnerSpec> out;
  for (const auto& name : cfg.select.learners) out.push_back(cfg.learner(name));
  return out;
}

eval::CvOptions cv_options(const PipelineConfig& cfg) {
  eval::CvOptions cv;
  cv.folds = cfg.folds;
  cv.smote = cfg.smote;
  cv.knn_sample = cfg.knn_sample;
  return cv;
}

select::SelectionResult need_selection(const fs::path& dir) {
  return select::selection_from_json(read_json(dir / "selection.json", "select"));
}

std::string feature_set_label(std::size_t k, std::size_t d) { return k == d ? "all" : "top-" + std::to_string(k); }

// ---------------------------------------------------------------------------
// stages

void stage_ingest(const PipelineConfig& cfg) {
  const fs::path& dir = cfg.output;
  if (!fs::exists(cfg.dataset.path)) fail(ErrorKind::Parse, "dataset file " + cfg.dataset.path.string() + " not found");
  const auto input_hash = sha256_file(cfg.dataset.path);
  spdlog::info("ingest: loading {} ({})", cfg.dataset.path.string(), ingest::to_string(cfg.dataset.kind));
  const auto raw = ingest::load_csv(cfg.dataset.path, cfg.dataset.kind);
  // Train-only scope standardizes inside each fold, so the stored data stays unscaled.
  ingest::PrepareOptions opt{cfg.task, cfg.folds.scope == eval::Scope::Global};
  auto prepared = ingest::prepare(raw, cfg.dataset.kind, opt);
  ingest::Dataset data = std::move(prepared.data);
  const std::size_t before_sampling = data.n_rows();
  if (cfg.sample_rows > 0 && cfg.sample_rows < data.n_rows()) {
    data = ingest::sample_rows(data, cfg.sample_rows, mix_seed(cfg.seed, 0x73616d70));
    spdlog::info("ingest: stratified sample of {} from {} rows", data.n_rows(), before_sampling);
  }
  ingest::write_dataset(dir / "prepared", data, prepared.categorical_maps);
  spdlog::info("ingest: {} rows x {} features, {} classes", data.n_rows(), data.n_features(), data.n_classes());
  update_state(dir, Stage::Ingest,
               {{"input", cfg.dataset.path.filename().string()},
                {"input_sha256", input_hash},
                {"rows_loaded", prepared.rows_loaded},
                {"rows_after_clean", prepared.rows_after_clean},
                {"rows", data.n_rows()},
                {"sampled", data.n_rows() != before_sampling},
                {"features", data.n_features()},
                {"class_counts", class_counts_json(data)},
                {"scaled", opt.scale},
                {"content_hash", data.content_hash()}});
}

void stage_balance(const PipelineConfig& cfg) {
  const fs::path& dir = cfg.output;
  const auto data = need_dataset(dir / "prepared", "ingest");
  json record = {{"rows_before", data.n_rows()}, {"class_counts_before", class_counts_json(data)}};
  if (cfg.folds.scope == eval::Scope::TrainOnly) {
    spdlog::info("balance: train-only scope, SMOTE deferred to each training fold");
    ingest::write_dataset(dir / "balanced", data);
    record["skipped"] = true;
    record["reason"] = "train-only scope: balancing runs inside each training fold";
  } else if (sampler::is_balanced(data)) {
    const auto counts = data.class_counts();
    std::string summary;
    for (std::size_t c = 0; c < counts.size(); ++c) summary += (c ? " vs " : "") + std::to_string(counts[c]);
    spdlog::info("balance: balanced, skipped ({})", summary);
    ingest::write_dataset(dir / "balanced", data);
    record["skipped"] = true;
    record["reason"] = "balanced, skipped (" + summary + ")";
  } else {
    auto result = sampler::smote(data, cfg.smote);
    spdlog::info("balance: SMOTE added {} rows", result.synthetic_rows());
    ingest::write_dataset(dir / "balanced", result.data);
    json classes = json::array();
    for (const auto& c : result.classes) {
      classes.push_back({{"class", data.class_names()[static_cast<std::size_t>(c.label)]},
                         {"original", c.original},
                         {"synthetic", c.synthetic},
                         {"k_used", c.k_used}});
    }
    record["skipped"] = false;
    record["classes"] = classes;
    record["rows_after"] = result.data.n_rows();
    record["content_hash"] = result.data.content_hash();
    update_state(dir, Stage::Balance, record);
    return;
  }
  record["rows_after"] = data.n_rows();
  record["content_hash"] = data.content_hash();
  update_state(dir, Stage::Balance, record);
}

void stage_rank(const PipelineConfig& cfg) {
  const fs::path& dir = cfg.output;
  const auto data = need_dataset(dir / "balanced", "balance");
  boost::GBConfig gb = cfg.boost;
  gb.n_classes = data.n_classes();
  gb.objective = data.n_classes() == 2 ? boost::Objective::BinaryLogistic : boost::Objective::Softmax;
  boost::TrainLog log;
  spdlog::info("rank: {} rounds of depth-{} trees ({} splits)", gb.n_rounds, gb.max_depth, boost::to_string(gb.split_mode));
  const auto forest = boost::train_boosted(data, gb, &log);
  const auto ranking = boost::feature_importance(forest);
  write_json(dir / "forest.json", forest.to_json());
  json rj = boost::ranking_to_json(ranking, data.feature_names());
  rj["dataset_hash"] = data.content_hash();
  write_json(dir / "ranking.json", rj);
  json top = json::array();
  for (std::size_t i = 0; i < std::min<std::size_t>(10, ranking.order.size()); ++i) {
    top.push_back(data.feature_names()[ranking.order[i]]);
  }
  update_state(dir, Stage::Rank,
               {{"rounds", forest.n_rounds()},
                {"trees", forest.trees().size()},
                {"initial_loss", log.loss.front()},
                {"final_loss", log.loss.back()},
                {"top_features", top},
                {"forest_hash", ranking.source}});
}

void stage_select(const PipelineConfig& cfg) {
  const fs::path& dir = cfg.output;
  const auto data = need_dataset(dir / "balanced", "balance");
  const auto rj = read_json(dir / "ranking.json", "rank");
  if (rj.value("dataset_hash", "") != data.content_hash()) {
    fail(ErrorKind::Ordering, "ranking.json was computed from a different dataset; run rank again");
  }
  const auto ranking = boost::ranking_from_json(rj);
  select::SelectionResult result;
  if (cfg.select.top_k > 0) {
    if (cfg.select.top_k > data.n_features()) {
      fail(ErrorKind::Config, "select.top_k: " + std::to_string(cfg.select.top_k) + " exceeds the " +
                                  std::to_string(data.n_features()) + " features");
    }
    spdlog::info("select: fixed prefix of {} features", cfg.select.top_k);
    result.chosen = select::prefix(ranking, cfg.select.top_k);
    result.passed = true;
    result.threshold = cfg.select.threshold;
    result.step = cfg.select.step;
  } else {
    select::SelectionOptions opt;
    opt.threshold = cfg.select.threshold;
    opt.step = cfg.select.step;
    opt.early_exit = cfg.select.early_exit;
    opt.cv = cv_options(cfg);
    if (cfg.select.reduced_cv) opt.cv.folds.n_folds = 3;
    result = select::search_subsets(data, ranking, selection_specs(cfg), opt);
  }
  write_json(dir / "selection.json", select::selection_to_json(result, ranking, data.feature_names()));
  write_text(dir / "selection.csv", select::selection_csv(result));
  spdlog::info("select: chose {} of {} features{}", result.chosen.size(), data.n_features(),
               result.passed ? "" : " (no prefix passed)");
  update_state(dir, Stage::Select,
               {{"chosen_k", result.chosen.size()},
                {"passed", result.passed},
                {"fixed_k", cfg.select.top_k > 0},
                {"candidates", result.candidates.size()}});
}

void stage_train(const PipelineConfig& cfg) {
  const fs::path& dir = cfg.output;
  auto data = need_dataset(dir / "balanced", "balance");
  const auto sel = need_selection(dir);
  data = data.select_features(sel.chosen);
  json record = {{"rows", data.n_rows()}, {"features", sel.chosen}};
  if (cfg.folds.scope == eval::Scope::TrainOnly) {
    // Final models see the same preprocessing as the training folds.
    auto scaled = ingest::standardize(data.x());
    data = ingest::Dataset(std::move(scaled.x), data.y(), data.feature_names(), data.class_names(), scaled.stats);
    if (!sampler::is_balanced(data)) data = sampler::smote(data, cfg.smote).data;
    json stats = {{"mean", scaled.stats.mean}, {"std", scaled.stats.std}};
    write_json(dir / "models" / "scaler.json", stats);
    record["rows"] = data.n_rows();
  }
  json trained = json::array();
  for (const auto& spec : cfg.learners) {
    spdlog::info("train: {}", spec.name);
    const auto model = learners::fit(spec, data.x(), data.y(), data.n_classes(), sel.chosen);
    write_json(dir / "models" / (spec.name + ".json"), model.to_json());
    trained.push_back(spec.name);
  }
  record["learners"] = trained;
  update_state(dir, Stage::Train, record);
}

void stage_evaluate(const PipelineConfig& cfg) {
  const fs::path& dir = cfg.output;
  const auto data = need_dataset(dir / "balanced", "balance");
  const auto sel = need_selection(dir);
  const auto cv = cv_options(cfg);
  json summary = json::object();
  for (const auto& spec : cfg.learners) {
    spdlog::info("evaluate: {} with {}-fold CV on {} features", spec.name, cv.folds.n_folds, sel.chosen.size());
    const auto r = eval::run_cv(data, spec, sel.chosen, cv);
    json j = eval::cv_to_json(r, data.class_names());
    j["oof_pred"] = r.oof_pred;
    j["oof_proba"] = encode_doubles(r.oof_proba.data());
    write_json(dir / "folds" / (spec.name + ".json"), j);
    summary[spec.name] = r.mean.accuracy;
    spdlog::info("evaluate: {} accuracy {:.4f}%", spec.name, r.mean.accuracy * 100.0);
  }
  json record = {{"accuracy", summary}};
  if (cfg.scalability.enabled) {
    auto mlp = std::get<learners::MLPConfig>(cfg.learner(cfg.scalability.learner).config);
    const auto s = eval::scalability_check(data, sel.chosen, mlp, cfg.scalability.epochs, cfg.scalability.tolerance_pp,
                                           cfg.folds.seed);
    write_json(dir / "scalability.json", eval::scalability_to_json(s));
    record["scalable"] = s.scalable;
  } else if (fs::exists(dir / "scalability.json")) {
    fs::remove(dir / "scalability.json");
  }
  update_state(dir, Stage::Evaluate, record);
}

eval::MetricsRow metrics_from_json(const json& j) {
  eval::MetricsRow m;
  m.accuracy = j.at("accuracy").get<double>();
  m.precision = j.at("precision").get<double>();
  m.recall = j.at("recall").get<double>();
  m.f1 = j.at("f1").get<double>();
  m.weighted_precision = j.at("weighted_precision").get<double>();
  m.weighted_recall = j.at("weighted_recall").get<double>();
  m.weighted_f1 = j.at("weighted_f1").get<double>();
  m.mae = j.at("mae").get<double>();
  m.mse = j.at("mse").get<double>();
  m.rmse = j.at("rmse").get<double>();
  if (!j.at("auc").is_null()) m.auc = j.at("auc").get<double>();
  return m;
}

eval::CvResult cv_from_json(const json& j, std::size_t n_rows) {
  eval::CvResult r;
  r.learner = j.at("learner").get<std::string>();
  r.scope = eval::parse_scope(j.at("scope").get<std::string>());
  r.features = j.at("features").get<std::vector<std::size_t>>();
  r.mean = metrics_from_json(j.at("mean"));
  const auto k = j.at("classes").size();
  r.confusion = eval::ConfusionMatrix{k, j.at("confusion").get<std::vector<std::uint64_t>>(), 0};
  for (auto c : r.confusion.counts) r.confusion.total += c;
  for (const auto& f : j.at("folds")) {
    eval::FoldResult fr;
    fr.fold = f.at("fold").get<std::size_t>() - 1;
    fr.train_rows = f.at("train_rows").get<std::size_t>();
    fr.test_rows = f.at("test_rows").get<std::size_t>();
    fr.metrics = metrics_from_json(f.at("metrics"));
    r.folds.push_back(std::move(fr));
  }
  r.oof_pred = j.at("oof_pred").get<std::vector<int>>();
  r.oof_proba = Matrix(n_rows, k, decode_doubles(j.at("oof_proba").get<std::string>()));
  if (r.oof_pred.size() != n_rows) fail(ErrorKind::Ordering, "fold outputs do not match the dataset; run evaluate again");
  return r;
}

std::map<std::string, std::string> list_outputs(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir).generic_string();
    if (rel == "manifest.json" || rel == kTimings || rel == kLock || rel == kStale) continue;
    if (rel.ends_with(".tmp")) continue;
    files[rel] = sha256_file(entry.path());
  }
  return files;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void stage_report(const PipelineConfig& cfg) {
  const fs::path& dir = cfg.output;
  const auto data = need_dataset(dir / "balanced", "balance");
  const auto sel = need_selection(dir);
  const auto state = read_json(dir / kState, "ingest");

  std::string metrics = eval::metrics_csv_header();
  json learners_json = json::object();
  for (const auto& spec : cfg.learners) {
    const auto r = cv_from_json(read_json(dir / "folds" / (spec.name + ".json"), "evaluate"), data.n_rows());
    if (r.features != sel.chosen) fail(ErrorKind::Ordering, "fold outputs use a different feature set; run evaluate again");
    metrics += eval::metrics_csv_rows(r, feature_set_label(r.features.size(), data.n_features()));
    write_text(dir / ("confusion_" + spec.name + ".csv"), eval::confusion_csv(r.confusion, data.class_names()));
    write_text(dir / ("roc_" + spec.name + ".csv"), eval::roc_csv(r, data.y(), data.class_names()));
    const auto cm = eval::classification_metrics(r.confusion);
    json never = json::array();
    for (auto c : cm.never_predicted) never.push_back(data.class_names()[c]);
    learners_json[spec.name] = {{"mean", eval::metrics_to_json(r.mean)},
                                {"confusion", r.confusion.counts},
                                {"never_predicted", never},
                                {"n_folds", r.folds.size()}};
  }
  write_text(dir / "metrics.csv", metrics);

  json chosen_names = json::array();
  for (auto f : sel.chosen) chosen_names.push_back(data.feature_names()[f]);
  json report = {{"format", "nids.report"},
                 {"version", 1},
                 {"dataset", ingest::to_string(cfg.dataset.kind)},
                 {"task", ingest::to_string(cfg.task)},
                 {"scope", eval::to_string(cfg.folds.scope)},
                 {"classes", data.class_names()},
                 {"rows", data.n_rows()},
                 {"selection", {{"chosen_k", sel.chosen.size()}, {"passed", sel.passed}, {"features", chosen_names}}},
                 {"balance", state.value("balance", json::object())},
                 {"learners", learners_json}};
  if (fs::exists(dir / "scalability.json")) report["scalability"] = read_json(dir / "scalability.json");
  write_json(dir / "report.json", report);

  json files = json::object();
  for (const auto& [name, hash] : list_outputs(dir)) files[name] = hash;
  json manifest = {{"tool", "nids"},
                   {"version", kVersion},
                   {"config", config_to_json(cfg)},
                   {"inputs", {{state.at("ingest").value("input", ""), state.at("ingest").value("input_sha256", "")}}},
                   {"seeds",
                    {{"global", cfg.seed},
                     {"smote", cfg.smote.seed},
                     {"folds", cfg.folds.seed}}},
                   {"levers",
                    {{"sample_rows", cfg.sample_rows},
                     {"split_mode", boost::to_string(cfg.boost.split_mode)},
                     {"knn_sample", cfg.knn_sample},
                     {"reduced_cv", cfg.select.reduced_cv},
                     {"early_exit", cfg.select.early_exit},
                     {"top_k", cfg.select.top_k},
                     {"scope", eval::to_string(cfg.folds.scope)}}},
                   {"stages", state},
                   {"chosen_features", sel.chosen},
                   {"files", files}};
  manifest["content_hash"] = sha256_hex(manifest.dump());
  json timings = fs::exists(dir / kTimings) ? read_json(dir / kTimings) : json::object();
  manifest["run"] = {{"generated_at", utc_now()},
                     {"output_dir", fs::absolute(dir).string()},
                     {"threads", thread_count()},
                     {"stage_seconds", timings}};
  write_json(dir / "manifest.json", manifest);
  spdlog::info("report: wrote metrics.csv, report.json and manifest.json to {}", dir.string());
}

void record_timing(const fs::path& dir, Stage stage, double seconds) {
  json t = fs::exists(dir / kTimings) ? read_json(dir / kTimings) : json::object();
  t[to_string(stage)] = seconds;
  write_json(dir / kTimings, t);
}

}  // namespace

OutputLock::OutputLock(const fs::path& dir) : path_(dir / kLock) {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    fail(ErrorKind::Stage, "output directory " + dir.string() + " is in use by another run (remove " +
                               path_.string() + " if no run is active)");
  }
  const auto pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

void run_stage(Stage stage, const PipelineConfig& cfg, bool locked) {
  std::optional<OutputLock> lock;
  if (!locked) lock.emplace(cfg.output);
  if (cfg.threads > 0) set_thread_count(cfg.threads);
  const fs::path& dir = cfg.output;
  const auto start = std::chrono::steady_clock::now();
  auto mark_stale = [&](const std::string& what) {
    std::error_code ec;
    write_json(dir / kStale, {{"stage", to_string(stage)}, {"error", what}});
    (void)ec;
  };
  try {
    switch (stage) {
      case Stage::Ingest: stage_ingest(cfg); break;
      case Stage::Balance: stage_balance(cfg); break;
      case Stage::Rank: stage_rank(cfg); break;
      case Stage::Select: stage_select(cfg); break;
      case Stage::Train: stage_train(cfg); break;
      case Stage::Evaluate: stage_evaluate(cfg); break;
      case Stage::Report: stage_report(cfg); break;
    }
  } catch (const Error& e) {
    mark_stale(e.what());
    throw Error(e.kind(), std::string("stage ") + to_string(stage) + ": " + e.what());
  } catch (const json::exception& e) {
    mark_stale(e.what());
    throw Error(ErrorKind::Parse, std::string("stage ") + to_string(stage) + ": " + e.what());
  } catch (const std::exception& e) {
    mark_stale(e.what());
    throw Error(ErrorKind::Stage, std::string("stage ") + to_string(stage) + ": " + e.what());
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  record_timing(dir, stage, seconds);
  if (fs::exists(dir / kStale) && read_json(dir / kStale).value("stage", "") == to_string(stage)) {
    fs::remove(dir / kStale);
  }
  spdlog::info("stage {} done in {:.2f}s", to_string(stage), seconds);
}

void run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  OutputLock lock(cfg.output);
  for (auto stage : all_stages()) run_stage(stage, cfg, true);
}

json stable_manifest(const fs::path& output_dir) {
  json m = read_json(output_dir / "manifest.json", "report");
  m.erase("run");
  return m;
}

}  // namespace nids::pipeline
