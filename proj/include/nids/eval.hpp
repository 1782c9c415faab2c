#pragma once

// Cross-validation harness, metrics, ROC/AUC and the epoch scalability check.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "nids/ingest.hpp"
#include "nids/learners.hpp"
#include "nids/matrix.hpp"
#include "nids/sampler.hpp"

namespace nids::eval {

/// Global: data is balanced before splitting. TrainOnly: standardization and
/// SMOTE are fitted on each training fold.
enum class Scope { Global, TrainOnly };

const char* to_string(Scope scope);
Scope parse_scope(std::string_view name);

struct FoldSpec {
  std::size_t n_folds = 10;
  std::uint64_t seed = 42;
  Scope scope = Scope::Global;
  bool stratified = true;
};

struct Fold {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // ascending
};

/// Stratified mode needs `labels` (size n). Test sets partition [0, n).
std::vector<Fold> kfold_split(std::size_t n, const FoldSpec& spec, std::span<const int> labels = {});

/// Stratified single split with round(test_fraction * class count) test rows per class.
Fold holdout_split(std::span<const int> labels, double test_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// metrics

struct ConfusionMatrix {
  std::size_t n_classes = 0;
  std::vector<std::uint64_t> counts;  // rows = actual, cols = predicted
  std::uint64_t total = 0;

  std::uint64_t at(std::size_t actual, std::size_t predicted) const { return counts[actual * n_classes + predicted]; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes);
/// counts / total * 100.
Matrix to_percent(const ConfusionMatrix& cm);

struct ClassificationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;  // macro
  double recall = 0.0;
  double f1 = 0.0;
  double weighted_precision = 0.0;  // by actual-class support
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  std::vector<double> class_precision;
  std::vector<double> class_recall;
  std::vector<double> class_f1;
  std::vector<std::size_t> never_predicted;  // classes with an empty predicted column
};

/// Per-class scores with 0/0 taken as 0, then averaged.
ClassificationMetrics classification_metrics(const ConfusionMatrix& cm);

struct RegressionErrors {
  double mae = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
};

/// Errors between integer label codes.
RegressionErrors regression_errors(std::span<const int> y_true, std::span<const int> y_pred);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // score >= threshold counts as positive
};

/// Curve from (0,0) to (1,1) with one point per distinct score. Positive class is label 1.
std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const int> y);
/// Trapezoidal area under the curve.
double auc(std::span<const RocPoint> points);

/// Binary: AUC of the class-1 probability. Multiclass: macro mean of
/// one-vs-rest AUCs over classes that have both positives and negatives.
double multiclass_auc(const Matrix& proba, std::span<const int> y);

struct MetricsRow {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  double mae = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  std::optional<double> auc;
};

MetricsRow metrics_row(std::span<const int> y_true, std::span<const int> y_pred, const Matrix& proba,
                       std::size_t n_classes);
/// Field-wise mean; rmse is recomputed as sqrt of the mean mse.
MetricsRow mean_row(std::span<const MetricsRow> rows);

// ---------------------------------------------------------------------------
// cross-validation

struct CvOptions {
  FoldSpec folds;
  sampler::SmoteConfig smote;
  /// Caps the KNN reference set per fold by stratified sampling (0 = no cap).
  std::size_t knn_sample = 0;
};

struct FoldResult {
  std::size_t fold = 0;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  MetricsRow metrics;
  ConfusionMatrix confusion;
  std::vector<std::size_t> never_predicted;
  double train_seconds = 0.0;
  double predict_seconds = 0.0;
};

struct CvResult {
  std::string learner;
  std::vector<std::size_t> features;
  Scope scope = Scope::Global;
  std::vector<FoldResult> folds;
  MetricsRow mean;
  ConfusionMatrix confusion;   // summed over folds
  std::vector<int> oof_pred;   // out-of-fold prediction per dataset row
  Matrix oof_proba;            // rows x classes
};

/// Fits `spec` on each training fold restricted to `features` and scores the
/// held-out fold. Learner errors are rethrown with the fold number attached.
CvResult run_cv(const ingest::Dataset& data, const learners::LearnerSpec& spec, std::span<const std::size_t> features,
                const CvOptions& options);

// ---------------------------------------------------------------------------
// scalability

struct ScalabilityResult {
  std::vector<std::size_t> epochs;
  std::vector<double> accuracy;  // holdout accuracy, fraction
  double max_delta_pp = 0.0;     // percentage points
  double tolerance_pp = 0.5;
  bool scalable = true;
};

/// Trains the MLP from scratch at each epoch count (same seed) on a stratified
/// 80/20 holdout and compares accuracies.
ScalabilityResult scalability_check(const ingest::Dataset& data, std::span<const std::size_t> features,
                                    learners::MLPConfig cfg, std::span<const std::size_t> epochs,
                                    double tolerance_pp = 0.5, std::uint64_t split_seed = 42);

// ---------------------------------------------------------------------------
// report files

/// Header line of metrics.csv.
std::string metrics_csv_header();
/// One line per fold plus a "mean" line, values in percent.
std::string metrics_csv_rows(const CvResult& result, const std::string& feature_set);
std::string confusion_csv(const ConfusionMatrix& cm, std::span<const std::string> class_names);
/// learner ROC from out-of-fold probabilities; multiclass writes one curve per class.
std::string roc_csv(const CvResult& result, std::span<const int> y, std::span<const std::string> class_names);

nlohmann::ordered_json metrics_to_json(const MetricsRow& row);
nlohmann::ordered_json cv_to_json(const CvResult& result, std::span<const std::string> class_names);
nlohmann::ordered_json scalability_to_json(const ScalabilityResult& result);

}  // namespace nids::eval
