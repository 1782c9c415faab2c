#pragma once

// Threshold-driven prefix search over a gain ranking: evaluate the top-k
// features for k = N, N - step, ... and keep the smallest k on which every
// learner reaches the accuracy threshold.

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nids/boost.hpp"
#include "nids/eval.hpp"
#include "nids/ingest.hpp"
#include "nids/learners.hpp"

namespace nids::select {

/// (learner name, mean cross-validated accuracy) in learner order.
using AccuracyMap = std::vector<std::pair<std::string, double>>;

struct Candidate {
  std::size_t k = 0;
  AccuracyMap accuracy;
  bool passed = false;
};

struct SelectionOptions {
  double threshold = 0.9995;
  std::size_t step = 2;
  /// Evaluate from the smallest k upward and stop at the first pass.
  bool early_exit = false;
  eval::CvOptions cv;
};

struct SelectionResult {
  std::vector<Candidate> candidates;  // k descending
  std::vector<std::size_t> chosen;    // feature indices, ranking order
  bool passed = false;                // false: nothing passed, chosen is every feature
  double threshold = 0.0;
  std::size_t step = 2;
  bool early_exit = false;
  std::size_t cv_folds = 0;
};

/// Top-k feature indices of `ranking`.
std::vector<std::size_t> prefix(const boost::FeatureRanking& ranking, std::size_t k);

/// The k values a full sweep visits: N, N - step, ... > 0.
std::vector<std::size_t> sweep_sizes(std::size_t n, std::size_t step);

AccuracyMap evaluate_prefix(const ingest::Dataset& data, const boost::FeatureRanking& ranking, std::size_t k,
                            std::span<const learners::LearnerSpec> learners, const eval::CvOptions& cv);

SelectionResult search_subsets(const ingest::Dataset& data, const boost::FeatureRanking& ranking,
                               std::span<const learners::LearnerSpec> learners, const SelectionOptions& options);

/// The default selection learners: RF, DT, KNN and MLP.
std::vector<learners::LearnerSpec> selection_learners(std::uint64_t seed);

nlohmann::ordered_json selection_to_json(const SelectionResult& result, const boost::FeatureRanking& ranking,
                                         std::span<const std::string> feature_names);
SelectionResult selection_from_json(const nlohmann::ordered_json& j);
/// k,learner,accuracy,passed rows for plotting accuracy against k.
std::string selection_csv(const SelectionResult& result);

}  // namespace nids::select
