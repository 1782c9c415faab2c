#include "nids/select.hpp"

#include <algorithm>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "nids/error.hpp"

namespace nids::select {

using json = nlohmann::ordered_json;

namespace {

void check_ranking(const boost::FeatureRanking& ranking, std::size_t d) {
  if (ranking.order.size() != d) {
    fail(ErrorKind::Shape, "ranking covers " + std::to_string(ranking.order.size()) + " features, dataset has " +
                               std::to_string(d));
  }
  std::vector<char> seen(d, 0);
  for (auto f : ranking.order) {
    if (f >= d || seen[f]) fail(ErrorKind::Argument, "ranking is not a permutation of the feature indices");
    seen[f] = 1;
  }
}

}  // namespace

std::vector<std::size_t> prefix(const boost::FeatureRanking& ranking, std::size_t k) {
  if (k == 0 || k > ranking.order.size()) {
    fail(ErrorKind::Argument, "prefix size " + std::to_string(k) + " outside [1, " +
                                  std::to_string(ranking.order.size()) + "]");
  }
  return {ranking.order.begin(), ranking.order.begin() + static_cast<std::ptrdiff_t>(k)};
}

std::vector<std::size_t> sweep_sizes(std::size_t n, std::size_t step) {
  if (step < 1) fail(ErrorKind::Config, "select.step must be >= 1");
  std::vector<std::size_t> out;
  for (std::size_t k = n; k > 0; k = k > step ? k - step : 0) out.push_back(k);
  return out;
}

AccuracyMap evaluate_prefix(const ingest::Dataset& data, const boost::FeatureRanking& ranking, std::size_t k,
                            std::span<const learners::LearnerSpec> learners, const eval::CvOptions& cv) {
  check_ranking(ranking, data.n_features());
  const auto features = prefix(ranking, k);
  AccuracyMap out;
  for (const auto& spec : learners) {
    const auto r = eval::run_cv(data, spec, features, cv);
    out.emplace_back(spec.name, r.mean.accuracy);
  }
  return out;
}

SelectionResult search_subsets(const ingest::Dataset& data, const boost::FeatureRanking& ranking,
                               std::span<const learners::LearnerSpec> learners, const SelectionOptions& options) {
  if (learners.empty()) fail(ErrorKind::Argument, "feature selection needs at least one learner");
  if (!(options.threshold >= 0.0 && options.threshold <= 1.0)) fail(ErrorKind::Config, "select.threshold must be in [0, 1]");
  check_ranking(ranking, data.n_features());

  SelectionResult result;
  result.threshold = options.threshold;
  result.step = options.step;
  result.early_exit = options.early_exit;
  result.cv_folds = options.cv.folds.n_folds;

  auto sizes = sweep_sizes(data.n_features(), options.step);
  if (options.early_exit) std::reverse(sizes.begin(), sizes.end());
  for (auto k : sizes) {
    Candidate c;
    c.k = k;
    c.accuracy = evaluate_prefix(data, ranking, k, learners, options.cv);
    c.passed = std::all_of(c.accuracy.begin(), c.accuracy.end(),
                           [&](const auto& a) { return a.second >= options.threshold; });
    std::string summary;
    for (const auto& [name, acc] : c.accuracy) summary += fmt::format(" {}={:.4f}%", name, acc * 100.0);
    spdlog::info("select k={}:{}{}", k, summary, c.passed ? " pass" : "");
    result.candidates.push_back(std::move(c));
    if (options.early_exit && result.candidates.back().passed) break;
  }
  std::sort(result.candidates.begin(), result.candidates.end(),
            [](const Candidate& a, const Candidate& b) { return a.k > b.k; });

  for (auto it = result.candidates.rbegin(); it != result.candidates.rend(); ++it) {
    if (it->passed) {
      result.passed = true;
      result.chosen = prefix(ranking, it->k);
      break;
    }
  }
  if (!result.passed) {
    spdlog::warn("no prefix reached the accuracy threshold {}; keeping all {} features", options.threshold,
                 data.n_features());
    result.chosen = ranking.order;
  }
  return result;
}

std::vector<learners::LearnerSpec> selection_learners(std::uint64_t seed) {
  std::vector<learners::LearnerSpec> out;
  for (const char* name : {"RF", "DT", "KNN", "MLP"}) out.push_back(learners::default_learner(name, seed));
  return out;
}

json selection_to_json(const SelectionResult& r, const boost::FeatureRanking& ranking,
                       std::span<const std::string> feature_names) {
  json candidates = json::array();
  for (const auto& c : r.candidates) {
    json acc = json::object();
    for (const auto& [name, a] : c.accuracy) acc[name] = a;
    candidates.push_back({{"k", c.k}, {"accuracy", acc}, {"passed", c.passed}});
  }
  json chosen_names = json::array();
  for (auto f : r.chosen) chosen_names.push_back(feature_names.empty() ? json(nullptr) : json(feature_names[f]));
  return json{{"format", "nids.selection"},
              {"version", 1},
              {"threshold", r.threshold},
              {"step", r.step},
              {"early_exit", r.early_exit},
              {"cv_folds", r.cv_folds},
              {"passed", r.passed},
              {"chosen_k", r.chosen.size()},
              {"chosen", r.chosen},
              {"chosen_names", chosen_names},
              {"ranking", boost::ranking_to_json(ranking, feature_names)},
              {"candidates", candidates}};
}

SelectionResult selection_from_json(const json& j) {
  if (j.value("format", "") != "nids.selection" || j.value("version", 0) != 1) {
    fail(ErrorKind::Parse, "not a version-1 selection document");
  }
  SelectionResult r;
  r.threshold = j.at("threshold").get<double>();
  r.step = j.at("step").get<std::size_t>();
  r.early_exit = j.at("early_exit").get<bool>();
  r.cv_folds = j.at("cv_folds").get<std::size_t>();
  r.passed = j.at("passed").get<bool>();
  r.chosen = j.at("chosen").get<std::vector<std::size_t>>();
  for (const auto& jc : j.at("candidates")) {
    Candidate c;
    c.k = jc.at("k").get<std::size_t>();
    c.passed = jc.at("passed").get<bool>();
    for (const auto& [name, a] : jc.at("accuracy").items()) c.accuracy.emplace_back(name, a.get<double>());
    r.candidates.push_back(std::move(c));
  }
  return r;
}

std::string selection_csv(const SelectionResult& r) {
  std::string out = "k,learner,accuracy,passed\n";
  for (const auto& c : r.candidates) {
    for (const auto& [name, a] : c.accuracy) {
      out += fmt::format("{},{},{:.6f},{}\n", c.k, name, a * 100.0, c.passed ? 1 : 0);
    }
  }
  return out;
}

}  // namespace nids::select
