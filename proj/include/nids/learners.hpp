#pragma once

// Classifiers: CART decision tree, random forest, k-nearest neighbours and a
// multilayer perceptron. LearnerModel wraps any of them (plus a boosted
// forest) behind one predict interface.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "nids/boost.hpp"
#include "nids/matrix.hpp"

namespace nids::learners {

struct DTConfig {
  std::optional<std::size_t> max_depth;  // unbounded when empty
  std::size_t min_samples_split = 2;
};

struct RFConfig {
  std::size_t n_trees = 100;
  std::size_t features_per_split = 0;  // 0 means ceil(sqrt(d))
  bool bootstrap = true;
  std::uint64_t seed = 42;
  DTConfig tree;
};

struct KNNConfig {
  std::size_t k = 5;
};

struct MLPConfig {
  std::vector<std::size_t> hidden_layers = {128, 64};
  std::size_t epochs = 125;
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 42;
};

// ---------------------------------------------------------------------------
// decision tree

struct DTNode {
  int feature = -1;  // leaf iff < 0
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int label = 0;                      // majority class, ties to the lowest id
  std::vector<double> distribution;   // class fractions of the training rows here
};

class DecisionTree {
 public:
  DecisionTree() = default;
  DecisionTree(std::size_t n_features, std::size_t n_classes, std::vector<DTNode> nodes);

  int predict(std::span<const double> row) const { return leaf(row).label; }
  const std::vector<double>& proba(std::span<const double> row) const { return leaf(row).distribution; }

  const std::vector<DTNode>& nodes() const { return nodes_; }
  std::size_t n_features() const { return n_features_; }
  std::size_t n_classes() const { return n_classes_; }
  std::size_t depth() const;

 private:
  const DTNode& leaf(std::span<const double> row) const;

  std::size_t n_features_ = 0;
  std::size_t n_classes_ = 0;
  std::vector<DTNode> nodes_;
};

DecisionTree train_dt(const Matrix& x, std::span<const int> y, std::size_t n_classes, const DTConfig& cfg);

// ---------------------------------------------------------------------------
// random forest

class RandomForest {
 public:
  RandomForest() = default;
  explicit RandomForest(std::vector<DecisionTree> trees) : trees_(std::move(trees)) {}

  /// Majority vote, ties to the lowest class id.
  int predict(std::span<const double> row) const;
  /// Mean of the trees' leaf class fractions.
  std::vector<double> proba(std::span<const double> row) const;
  const std::vector<DecisionTree>& trees() const { return trees_; }

 private:
  std::vector<DecisionTree> trees_;
};

RandomForest train_rf(const Matrix& x, std::span<const int> y, std::size_t n_classes, const RFConfig& cfg);

// ---------------------------------------------------------------------------
// k nearest neighbours

class KnnModel {
 public:
  KnnModel() = default;
  KnnModel(Matrix x, std::vector<int> y, std::size_t n_classes, std::size_t k);

  int predict(std::span<const double> row) const;
  /// Neighbour vote fractions.
  std::vector<double> proba(std::span<const double> row) const;
  /// Indices of the k nearest training rows, nearest first; ties to the lower index.
  std::vector<std::size_t> neighbors(std::span<const double> row) const;

  const Matrix& x() const { return x_; }
  const std::vector<int>& y() const { return y_; }
  std::size_t k() const { return k_; }
  std::size_t n_classes() const { return n_classes_; }

 private:
  Matrix x_;
  std::vector<int> y_;
  std::size_t n_classes_ = 0;
  std::size_t k_ = 5;
};

KnnModel train_knn(const Matrix& x, std::span<const int> y, std::size_t n_classes, const KNNConfig& cfg);

// ---------------------------------------------------------------------------
// multilayer perceptron

/// Dense layer; `weights` is out x in, row-major.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  /// Rectifier hidden layers, softmax output.
  std::vector<double> proba(std::span<const double> row) const;
  int predict(std::span<const double> row) const;
  /// Class probabilities for every row (rows x classes).
  Matrix proba(const Matrix& x) const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  std::size_t n_inputs() const { return layers_.front().in; }
  std::size_t n_classes() const { return layers_.back().out; }

 private:
  std::vector<DenseLayer> layers_;
};

/// Randomly initialised network (He-normal weights, zero biases).
Mlp init_mlp(std::size_t n_inputs, std::size_t n_classes, const MLPConfig& cfg);

struct MlpGradients {
  double loss = 0.0;  // mean cross-entropy over the batch
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> bias;
};

/// Backpropagated gradients of the mean cross-entropy over (x, y).
MlpGradients mlp_gradients(const Mlp& net, const Matrix& x, std::span<const int> y);
double mlp_loss(const Mlp& net, const Matrix& x, std::span<const int> y);

struct MlpLog {
  std::vector<double> epoch_loss;  // mean mini-batch loss per epoch
};

/// Mini-batch SGD with momentum. Expects standardized inputs.
Mlp train_mlp(const Matrix& x, std::span<const int> y, std::size_t n_classes, const MLPConfig& cfg,
              MlpLog* log = nullptr);
/// Continues training an existing network for cfg.epochs more epochs.
Mlp continue_mlp(Mlp net, const Matrix& x, std::span<const int> y, const MLPConfig& cfg, std::size_t first_epoch,
                 MlpLog* log = nullptr);

// ---------------------------------------------------------------------------
// uniform model interface

enum class LearnerKind { DT, RF, KNN, MLP, XGB };

const char* to_string(LearnerKind kind);

using LearnerConfig = std::variant<DTConfig, RFConfig, KNNConfig, MLPConfig, boost::GBConfig>;

/// A named learner configuration, e.g. {"ANN", MLPConfig{{64}}}.
struct LearnerSpec {
  std::string name;
  LearnerConfig config;

  LearnerKind kind() const { return static_cast<LearnerKind>(config.index()); }
};

/// The default learners: RF, DT, KNN, MLP and the one-hidden-layer ANN.
std::vector<LearnerSpec> default_learners(std::uint64_t seed);
LearnerSpec default_learner(std::string_view name, std::uint64_t seed);

using ModelVariant = std::variant<DecisionTree, RandomForest, KnnModel, Mlp, boost::BoostedForest>;

class LearnerModel {
 public:
  LearnerModel(std::string name, std::size_t n_classes, std::vector<std::size_t> features, ModelVariant model);

  const std::string& name() const { return name_; }
  LearnerKind kind() const { return static_cast<LearnerKind>(model_.index()); }
  std::size_t n_classes() const { return n_classes_; }
  const std::vector<std::size_t>& features() const { return features_; }
  const ModelVariant& model() const { return model_; }

  /// Rows must have exactly features().size() columns.
  int predict(std::span<const double> row) const;
  std::vector<double> predict_proba(std::span<const double> row) const;
  std::vector<int> predict(const Matrix& x) const;
  Matrix predict_proba(const Matrix& x) const;

  nlohmann::ordered_json to_json() const;
  static LearnerModel from_json(const nlohmann::ordered_json& j);

 private:
  void check_width(std::size_t width) const;

  std::string name_;
  std::size_t n_classes_ = 0;
  std::vector<std::size_t> features_;
  ModelVariant model_;
};

/// Trains `spec` on (x, y). `features` records which dataset columns x holds.
LearnerModel fit(const LearnerSpec& spec, const Matrix& x, std::span<const int> y, std::size_t n_classes,
                 std::vector<std::size_t> features = {});

nlohmann::ordered_json spec_to_json(const LearnerSpec& spec);

}  // namespace nids::learners
