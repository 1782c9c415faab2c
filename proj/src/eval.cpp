#include "nids/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "nids/error.hpp"
#include "nids/random.hpp"

namespace nids::eval {

using json = nlohmann::ordered_json;

const char* to_string(Scope scope) { return scope == Scope::Global ? "global" : "train-only"; }

Scope parse_scope(std::string_view name) {
  if (name == "global" || name == "global-smote") return Scope::Global;
  if (name == "train-only" || name == "train-only-smote") return Scope::TrainOnly;
  fail(ErrorKind::Config, "unknown scope '" + std::string(name) + "' (expected global or train-only)");
}

namespace {

std::vector<Fold> folds_from_assignment(const std::vector<std::size_t>& order, std::size_t k) {
  std::vector<std::size_t> fold_of(order.size());
  for (std::size_t j = 0; j < order.size(); ++j) fold_of[order[j]] = j % k;
  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t f = 0; f < k; ++f) (f == fold_of[i] ? folds[f].test : folds[f].train).push_back(i);
  }
  return folds;
}

std::vector<std::vector<std::size_t>> by_class(std::span<const int> labels) {
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) fail(ErrorKind::Argument, "negative label");
    const auto c = static_cast<std::size_t>(labels[i]);
    if (c >= members.size()) members.resize(c + 1);
    members[c].push_back(i);
  }
  return members;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::vector<Fold> kfold_split(std::size_t n, const FoldSpec& spec, std::span<const int> labels) {
  const std::size_t k = spec.n_folds;
  if (k < 2) fail(ErrorKind::Config, "n_folds must be >= 2");
  if (n < k) {
    fail(ErrorKind::Argument, "cannot split " + std::to_string(n) + " rows into " + std::to_string(k) + " folds");
  }
  Rng rng(mix_seed(spec.seed, 0x666f6c64));
  std::vector<std::size_t> order;
  order.reserve(n);
  if (spec.stratified) {
    if (labels.size() != n) fail(ErrorKind::Shape, "stratified folds need one label per row");
    // Classes are laid end to end, so fold j % k gets an even share of each.
    for (auto& members : by_class(labels)) {
      shuffle(members, rng);
      order.insert(order.end(), members.begin(), members.end());
    }
  } else {
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, rng);
  }
  return folds_from_assignment(order, k);
}

Fold holdout_split(std::span<const int> labels, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail(ErrorKind::Config, "test fraction must be in (0, 1)");
  std::vector<char> is_test(labels.size(), 0);
  auto members = by_class(labels);
  for (std::size_t c = 0; c < members.size(); ++c) {
    Rng rng(mix_seed(seed, c));
    shuffle(members[c], rng);
    const auto take = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members[c].size())));
    for (std::size_t i = 0; i < take; ++i) is_test[members[c][i]] = 1;
  }
  Fold fold;
  for (std::size_t i = 0; i < labels.size(); ++i) (is_test[i] ? fold.test : fold.train).push_back(i);
  if (fold.test.empty() || fold.train.empty()) fail(ErrorKind::Argument, "holdout split left an empty side");
  return fold;
}

// ---------------------------------------------------------------------------
// metrics

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.n_classes != n_classes) fail(ErrorKind::Shape, "confusion matrices differ in class count");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  total += other.total;
  return *this;
}

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes) {
  if (y_true.size() != y_pred.size()) fail(ErrorKind::Shape, "label vectors differ in length");
  ConfusionMatrix cm{n_classes, std::vector<std::uint64_t>(n_classes * n_classes, 0), y_true.size()};
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int a = y_true[i], p = y_pred[i];
    if (a < 0 || p < 0 || static_cast<std::size_t>(a) >= n_classes || static_cast<std::size_t>(p) >= n_classes) {
      fail(ErrorKind::Argument, "label out of range for " + std::to_string(n_classes) + " classes");
    }
    ++cm.counts[static_cast<std::size_t>(a) * n_classes + static_cast<std::size_t>(p)];
  }
  return cm;
}

Matrix to_percent(const ConfusionMatrix& cm) {
  if (cm.total == 0) fail(ErrorKind::EmptyData, "empty confusion matrix");
  Matrix out(cm.n_classes, cm.n_classes);
  for (std::size_t i = 0; i < cm.counts.size(); ++i) {
    out.data()[i] = static_cast<double>(cm.counts[i]) / static_cast<double>(cm.total) * 100.0;
  }
  return out;
}

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm) {
  if (cm.total == 0) fail(ErrorKind::EmptyData, "empty confusion matrix");
  const std::size_t k = cm.n_classes;
  ClassificationMetrics m;
  std::uint64_t trace = 0;
  for (std::size_t c = 0; c < k; ++c) trace += cm.at(c, c);
  m.accuracy = static_cast<double>(trace) / static_cast<double>(cm.total);
  auto ratio = [](std::uint64_t a, std::uint64_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t predicted = 0, actual = 0;
    for (std::size_t o = 0; o < k; ++o) {
      predicted += cm.at(o, c);
      actual += cm.at(c, o);
    }
    if (predicted == 0) m.never_predicted.push_back(c);
    const double p = ratio(cm.at(c, c), predicted);
    const double r = ratio(cm.at(c, c), actual);
    const double f = p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    m.class_precision.push_back(p);
    m.class_recall.push_back(r);
    m.class_f1.push_back(f);
    const double w = static_cast<double>(actual) / static_cast<double>(cm.total);
    m.precision += p / static_cast<double>(k);
    m.recall += r / static_cast<double>(k);
    m.f1 += f / static_cast<double>(k);
    m.weighted_precision += w * p;
    m.weighted_recall += w * r;
    m.weighted_f1 += w * f;
  }
  return m;
}

RegressionErrors regression_errors(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) fail(ErrorKind::Shape, "label vectors differ in length");
  if (y_true.empty()) fail(ErrorKind::EmptyData, "no labels to compare");
  RegressionErrors e;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double d = static_cast<double>(y_true[i] - y_pred[i]);
    e.mae += std::abs(d);
    e.mse += d * d;
  }
  e.mae /= static_cast<double>(y_true.size());
  e.mse /= static_cast<double>(y_true.size());
  e.rmse = std::sqrt(e.mse);
  return e;
}

std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const int> y) {
  if (scores.size() != y.size()) fail(ErrorKind::Shape, "scores and labels differ in length");
  std::size_t pos = 0;
  for (int v : y) {
    if (v != 0 && v != 1) fail(ErrorKind::Argument, "roc labels must be 0 or 1");
    pos += static_cast<std::size_t>(v);
  }
  const std::size_t neg = y.size() - pos;
  if (pos == 0 || neg == 0) fail(ErrorKind::UndefinedAuc, "AUC is undefined when only one class is present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> points;
  points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (y[order[i]] ? tp : fp) += 1;
    points.push_back({static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos), s});
  }
  return points;
}

double auc(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  }
  return area;
}

double multiclass_auc(const Matrix& proba, std::span<const int> y) {
  if (proba.rows() != y.size()) fail(ErrorKind::Shape, "probability rows differ from label count");
  const std::size_t k = proba.cols();
  std::vector<double> scores(y.size());
  std::vector<int> target(y.size());
  auto one_vs_rest = [&](std::size_t c) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      scores[i] = proba(i, c);
      target[i] = static_cast<std::size_t>(y[i]) == c ? 1 : 0;
    }
    return auc(roc_points(scores, target));
  };
  if (k == 2) return one_vs_rest(1);
  std::vector<std::size_t> support(k, 0);
  for (int v : y) ++support[static_cast<std::size_t>(v)];
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (support[c] == 0 || support[c] == y.size()) continue;
    sum += one_vs_rest(c);
    ++used;
  }
  if (used == 0) fail(ErrorKind::UndefinedAuc, "AUC is undefined when only one class is present");
  return sum / static_cast<double>(used);
}

MetricsRow metrics_row(std::span<const int> y_true, std::span<const int> y_pred, const Matrix& proba,
                       std::size_t n_classes) {
  const auto cm = confusion(y_true, y_pred, n_classes);
  const auto c = classification_metrics(cm);
  const auto e = regression_errors(y_true, y_pred);
  MetricsRow row{c.accuracy, c.precision, c.recall, c.f1, c.weighted_precision, c.weighted_recall, c.weighted_f1,
                 e.mae,      e.mse,       e.rmse,   std::nullopt};
  try {
    row.auc = multiclass_auc(proba, y_true);
  } catch (const Error& err) {
    if (err.kind() != ErrorKind::UndefinedAuc) throw;
  }
  return row;
}

MetricsRow mean_row(std::span<const MetricsRow> rows) {
  if (rows.empty()) fail(ErrorKind::EmptyData, "no metric rows to average");
  MetricsRow m;
  const double n = static_cast<double>(rows.size());
  double auc_sum = 0.0;
  std::size_t auc_count = 0;
  for (const auto& r : rows) {
    m.accuracy += r.accuracy / n;
    m.precision += r.precision / n;
    m.recall += r.recall / n;
    m.f1 += r.f1 / n;
    m.weighted_precision += r.weighted_precision / n;
    m.weighted_recall += r.weighted_recall / n;
    m.weighted_f1 += r.weighted_f1 / n;
    m.mae += r.mae / n;
    m.mse += r.mse / n;
    if (r.auc) {
      auc_sum += *r.auc;
      ++auc_count;
    }
  }
  m.rmse = std::sqrt(m.mse);
  if (auc_count > 0) m.auc = auc_sum / static_cast<double>(auc_count);
  return m;
}

// ---------------------------------------------------------------------------
// cross-validation

CvResult run_cv(const ingest::Dataset& data, const learners::LearnerSpec& spec, std::span<const std::size_t> features,
                const CvOptions& options) {
  for (auto f : features) {
    if (f >= data.n_features()) fail(ErrorKind::Argument, "feature index " + std::to_string(f) + " out of range");
  }
  if (features.empty()) fail(ErrorKind::Argument, "run_cv needs at least one feature");
  const auto folds = kfold_split(data.n_rows(), options.folds, data.y());
  const ingest::Dataset subset = data.select_features(features);
  const std::size_t k = data.n_classes();

  CvResult result;
  result.learner = spec.name;
  result.features.assign(features.begin(), features.end());
  result.scope = options.folds.scope;
  result.confusion = ConfusionMatrix{k, std::vector<std::uint64_t>(k * k, 0), 0};
  result.oof_pred.assign(data.n_rows(), 0);
  result.oof_proba = Matrix(data.n_rows(), k);

  std::vector<MetricsRow> rows;
  for (std::size_t fi = 0; fi < folds.size(); ++fi) {
    const auto& fold = folds[fi];
    try {
      ingest::Dataset train = subset.select_rows(fold.train);
      Matrix test_x = subset.x().select_rows(fold.test);
      std::vector<int> test_y;
      for (auto i : fold.test) test_y.push_back(data.y()[i]);

      if (options.folds.scope == Scope::TrainOnly) {
        auto scaled = ingest::standardize(train.x());
        test_x = ingest::apply_stats(test_x, scaled.stats);
        train = ingest::Dataset(std::move(scaled.x), train.y(), train.feature_names(), train.class_names(),
                                scaled.stats);
        if (!sampler::is_balanced(train)) {
          sampler::SmoteConfig sc = options.smote;
          sc.seed = mix_seed(options.smote.seed, fi);
          train = sampler::smote(train, sc).data;
        }
      }
      if (spec.kind() == learners::LearnerKind::KNN && options.knn_sample > 0 &&
          train.n_rows() > options.knn_sample) {
        train = ingest::sample_rows(train, options.knn_sample, mix_seed(options.folds.seed, 100 + fi));
      }

      FoldResult fr;
      fr.fold = fi;
      fr.train_rows = train.n_rows();
      fr.test_rows = fold.test.size();
      auto start = std::chrono::steady_clock::now();
      const auto model = learners::fit(spec, train.x(), train.y(), k, result.features);
      fr.train_seconds = seconds_since(start);
      start = std::chrono::steady_clock::now();
      const auto pred = model.predict(test_x);
      const auto proba = model.predict_proba(test_x);
      fr.predict_seconds = seconds_since(start);

      fr.metrics = metrics_row(test_y, pred, proba, k);
      fr.confusion = confusion(test_y, pred, k);
      fr.never_predicted = classification_metrics(fr.confusion).never_predicted;
      result.confusion += fr.confusion;
      for (std::size_t j = 0; j < fold.test.size(); ++j) {
        result.oof_pred[fold.test[j]] = pred[j];
        std::copy(proba.row(j).begin(), proba.row(j).end(), result.oof_proba.row(fold.test[j]).begin());
      }
      spdlog::debug("{} fold {}/{}: accuracy {:.6f}", spec.name, fi + 1, folds.size(), fr.metrics.accuracy);
      rows.push_back(fr.metrics);
      result.folds.push_back(std::move(fr));
    } catch (const Error& e) {
      throw Error(e.kind(), spec.name + " fold " + std::to_string(fi + 1) + ": " + e.what());
    }
  }
  result.mean = mean_row(rows);
  return result;
}

// ---------------------------------------------------------------------------
// scalability

ScalabilityResult scalability_check(const ingest::Dataset& data, std::span<const std::size_t> features,
                                    learners::MLPConfig cfg, std::span<const std::size_t> epochs, double tolerance_pp,
                                    std::uint64_t split_seed) {
  if (epochs.empty()) fail(ErrorKind::Argument, "scalability check needs at least one epoch count");
  const auto split = holdout_split(data.y(), 0.2, split_seed);
  const auto subset = data.select_features(features);
  const auto scaled = ingest::standardize(subset.x().select_rows(split.train));
  const Matrix test_x = ingest::apply_stats(subset.x().select_rows(split.test), scaled.stats);
  std::vector<int> train_y, test_y;
  for (auto i : split.train) train_y.push_back(data.y()[i]);
  for (auto i : split.test) test_y.push_back(data.y()[i]);

  ScalabilityResult r;
  r.tolerance_pp = tolerance_pp;
  for (auto e : epochs) {
    cfg.epochs = e;
    const auto net = learners::continue_mlp(learners::init_mlp(scaled.x.cols(), data.n_classes(), cfg), scaled.x,
                                            train_y, cfg, 0);
    std::size_t ok = 0;
    const Matrix p = net.proba(test_x);
    for (std::size_t i = 0; i < test_y.size(); ++i) {
      auto row = p.row(i);
      ok += static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) == test_y[i];
    }
    r.epochs.push_back(e);
    r.accuracy.push_back(static_cast<double>(ok) / static_cast<double>(test_y.size()));
    spdlog::info("scalability: {} epochs -> accuracy {:.4f}%", e, 100.0 * r.accuracy.back());
  }
  const auto [lo, hi] = std::minmax_element(r.accuracy.begin(), r.accuracy.end());
  r.max_delta_pp = (*hi - *lo) * 100.0;
  r.scalable = r.max_delta_pp <= tolerance_pp;
  return r;
}

// ---------------------------------------------------------------------------
// report files

namespace {

std::string pct(double v) { return fmt::format("{:.6f}", v * 100.0); }

std::string csv_line(const std::string& learner, const std::string& feature_set, std::size_t n_features,
                     Scope scope, const std::string& fold, const MetricsRow& m) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", learner, feature_set, n_features,
                     to_string(scope), fold, pct(m.accuracy), pct(m.precision), pct(m.recall), pct(m.f1),
                     pct(m.weighted_precision), pct(m.weighted_recall), pct(m.weighted_f1), pct(m.mae), pct(m.mse),
                     pct(m.rmse), m.auc ? pct(*m.auc) : std::string());
}

}  // namespace

std::string metrics_csv_header() {
  return "learner,feature_set,n_features,scope,fold,accuracy,precision,recall,f1,weighted_precision,"
         "weighted_recall,weighted_f1,mae,mse,rmse,auc\n";
}

std::string metrics_csv_rows(const CvResult& result, const std::string& feature_set) {
  std::string out;
  for (const auto& f : result.folds) {
    out += csv_line(result.learner, feature_set, result.features.size(), result.scope, std::to_string(f.fold + 1),
                    f.metrics);
  }
  out += csv_line(result.learner, feature_set, result.features.size(), result.scope, "mean", result.mean);
  return out;
}

std::string confusion_csv(const ConfusionMatrix& cm, std::span<const std::string> class_names) {
  const Matrix p = to_percent(cm);
  std::string out = "actual,predicted,count,percent\n";
  for (std::size_t a = 0; a < cm.n_classes; ++a) {
    for (std::size_t q = 0; q < cm.n_classes; ++q) {
      out += fmt::format("{},{},{},{:.9f}\n", class_names[a], class_names[q], cm.at(a, q), p(a, q));
    }
  }
  return out;
}

std::string roc_csv(const CvResult& result, std::span<const int> y, std::span<const std::string> class_names) {
  std::string out = "class,fpr,tpr,threshold\n";
  const std::size_t k = result.oof_proba.cols();
  std::vector<double> scores(y.size());
  std::vector<int> target(y.size());
  for (std::size_t c = (k == 2 ? 1 : 0); c < k; ++c) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      scores[i] = result.oof_proba(i, c);
      target[i] = static_cast<std::size_t>(y[i]) == c ? 1 : 0;
    }
    std::vector<RocPoint> points;
    try {
      points = roc_points(scores, target);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::UndefinedAuc) throw;
      continue;
    }
    for (const auto& p : points) {
      out += fmt::format("{},{:.9f},{:.9f},{}\n", class_names[c], p.fpr, p.tpr,
                         std::isinf(p.threshold) ? std::string("inf") : fmt::format("{:.9g}", p.threshold));
    }
  }
  return out;
}

json metrics_to_json(const MetricsRow& m) {
  return json{{"accuracy", m.accuracy},
              {"precision", m.precision},
              {"recall", m.recall},
              {"f1", m.f1},
              {"weighted_precision", m.weighted_precision},
              {"weighted_recall", m.weighted_recall},
              {"weighted_f1", m.weighted_f1},
              {"mae", m.mae},
              {"mse", m.mse},
              {"rmse", m.rmse},
              {"auc", m.auc ? json(*m.auc) : json(nullptr)}};
}

json cv_to_json(const CvResult& r, std::span<const std::string> class_names) {
  json folds = json::array();
  for (const auto& f : r.folds) {
    json never = json::array();
    for (auto c : f.never_predicted) never.push_back(class_names[c]);
    folds.push_back({{"fold", f.fold + 1},
                     {"train_rows", f.train_rows},
                     {"test_rows", f.test_rows},
                     {"metrics", metrics_to_json(f.metrics)},
                     {"confusion", f.confusion.counts},
                     {"never_predicted", never}});
  }
  return json{{"learner", r.learner},
              {"scope", to_string(r.scope)},
              {"features", r.features},
              {"classes", std::vector<std::string>(class_names.begin(), class_names.end())},
              {"n_folds", r.folds.size()},
              {"mean", metrics_to_json(r.mean)},
              {"confusion", r.confusion.counts},
              {"folds", folds}};
}

json scalability_to_json(const ScalabilityResult& r) {
  return json{{"epochs", r.epochs},
              {"accuracy", r.accuracy},
              {"max_delta_pp", r.max_delta_pp},
              {"tolerance_pp", r.tolerance_pp},
              {"scalable", r.scalable}};
}

}  // namespace nids::eval
