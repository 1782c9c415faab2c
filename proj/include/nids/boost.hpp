#pragma once

// Second-order gradient boosted regression trees.
//
// Each round fits a tree to the first and second derivatives (g, h) of the
// log-loss at the current margins. A leaf holding gradient sum G and hessian
// sum H gets weight -G / (H + lambda); a split is scored by
//
//   gain = 1/2 [GL^2/(HL+lambda) + GR^2/(HR+lambda) - (GL+GR)^2/(HL+HR+lambda)] - gamma
//
// and the accumulated gain per feature is the importance used for ranking.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "nids/ingest.hpp"
#include "nids/matrix.hpp"

namespace nids::boost {

enum class Objective { BinaryLogistic, Softmax };
enum class SplitMode { Exact, Quantile };

const char* to_string(Objective objective);
const char* to_string(SplitMode mode);

struct GBConfig {
  std::size_t n_rounds = 50;
  std::size_t max_depth = 6;
  double eta = 0.3;
  double lambda = 1.0;
  double gamma = 0.0;
  double min_child_weight = 1.0;
  Objective objective = Objective::BinaryLogistic;
  std::size_t n_classes = 2;
  SplitMode split_mode = SplitMode::Exact;
  std::size_t max_bins = 256;

  /// Throws a config error naming the offending field.
  void validate() const;
};

/// Flat tree node. Leaf iff feature < 0. Internal nodes send
/// x[feature] < threshold to `left`, everything else to `right`.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double weight = 0.0;  // leaf output before eta scaling
  double gain = 0.0;    // split gain realized at this node
  double cover = 0.0;   // hessian sum of samples routed here

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> row) const;
  std::size_t depth() const;
  std::size_t leaf_count() const;
};

struct GradHess {
  std::vector<double> g;
  std::vector<double> h;
};

/// Per-row derivatives of the log-loss at `margin`.
/// Binary: margin has n entries. Softmax: n*K entries, row-major by sample;
/// output is laid out the same way.
GradHess grad_hess(std::span<const double> margin, std::span<const int> y, Objective objective,
                   std::size_t n_classes = 2);

/// -G / (H + lambda); H + lambda must be positive.
double leaf_weight(double G, double H, double lambda);

double split_gain(double GL, double HL, double GR, double HR, double lambda, double gamma);

/// Greedy tree on one gradient/hessian vector. Exact mode scans all midpoints
/// of consecutive distinct sorted values; quantile mode scans at most
/// max_bins - 1 cut points per feature. Ties resolve to the lowest feature,
/// then the lowest threshold.
Tree build_tree(const Matrix& x, std::span<const double> g, std::span<const double> h, const GBConfig& config);

struct FeatureRanking {
  std::vector<std::size_t> order;  // feature indices by descending gain
  std::vector<double> gains;       // gains[i] belongs to order[i]
  std::string source;              // content hash of the forest that produced it
};

class BoostedForest {
 public:
  BoostedForest() = default;
  BoostedForest(GBConfig config, std::size_t n_features, double base_score);

  const GBConfig& config() const { return config_; }
  std::size_t n_features() const { return n_features_; }
  /// Trees per round: 1 for binary, K for softmax.
  std::size_t n_groups() const;
  std::size_t n_rounds() const { return trees_.size() / n_groups(); }
  double base_score() const { return base_score_; }
  const std::vector<Tree>& trees() const { return trees_; }
  const std::vector<double>& cum_gain() const { return cum_gain_; }

  /// Appends one round (n_groups trees) and accumulates split gains.
  void add_round(std::vector<Tree> round);

  /// base_score + eta * sum of tree outputs, one value per group.
  std::vector<double> predict_margin(std::span<const double> row) const;
  int predict_class(std::span<const double> row) const;
  /// Class probabilities (sigmoid or softmax of the margins).
  std::vector<double> predict_proba(std::span<const double> row) const;

  nlohmann::ordered_json to_json() const;
  static BoostedForest from_json(const nlohmann::ordered_json& j);

 private:
  GBConfig config_;
  std::size_t n_features_ = 0;
  double base_score_ = 0.0;
  std::vector<Tree> trees_;  // round-major: trees_[round * n_groups + group]
  std::vector<double> cum_gain_;
};

struct TrainLog {
  std::vector<double> loss;  // mean training log-loss before round 0 and after each round
};

BoostedForest train_boosted(const Matrix& x, std::span<const int> y, const GBConfig& config,
                            TrainLog* log = nullptr);
BoostedForest train_boosted(const ingest::Dataset& data, const GBConfig& config, TrainLog* log = nullptr);

/// Features by descending accumulated gain, ties by ascending index.
FeatureRanking feature_importance(const BoostedForest& forest);

nlohmann::ordered_json ranking_to_json(const FeatureRanking& ranking, std::span<const std::string> names = {});
FeatureRanking ranking_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json config_to_json(const GBConfig& config);
GBConfig config_from_json(const nlohmann::ordered_json& j);

}  // namespace nids::boost
