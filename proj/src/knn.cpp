#include <algorithm>
#include <numeric>

#include "nids/error.hpp"
#include "nids/learners.hpp"

namespace nids::learners {

KnnModel::KnnModel(Matrix x, std::vector<int> y, std::size_t n_classes, std::size_t k)
    : x_(std::move(x)), y_(std::move(y)), n_classes_(n_classes), k_(k) {
  if (k_ < 1) fail(ErrorKind::Config, "knn.k must be >= 1");
  if (k_ > x_.rows()) {
    fail(ErrorKind::Argument,
         "knn.k = " + std::to_string(k_) + " exceeds the " + std::to_string(x_.rows()) + " training rows");
  }
  if (y_.size() != x_.rows()) fail(ErrorKind::Shape, "label count differs from row count");
}

std::vector<std::size_t> KnnModel::neighbors(std::span<const double> row) const {
  if (row.size() != x_.cols()) fail(ErrorKind::Shape, "knn query width differs from training width");
  const std::size_t n = x_.rows();
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = x_.row(i);
    double s = 0.0;
    for (std::size_t f = 0; f < r.size(); ++f) {
      const double d = r[f] - row[f];
      s += d * d;
    }
    dist[i] = {s, i};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());
  std::vector<std::size_t> out(k_);
  for (std::size_t i = 0; i < k_; ++i) out[i] = dist[i].second;
  return out;
}

std::vector<double> KnnModel::proba(std::span<const double> row) const {
  std::vector<double> p(n_classes_, 0.0);
  for (auto i : neighbors(row)) p[static_cast<std::size_t>(y_[i])] += 1.0;
  for (auto& v : p) v /= static_cast<double>(k_);
  return p;
}

int KnnModel::predict(std::span<const double> row) const {
  const auto p = proba(row);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

KnnModel train_knn(const Matrix& x, std::span<const int> y, std::size_t n_classes, const KNNConfig& cfg) {
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= n_classes) {
      fail(ErrorKind::Argument, "label " + std::to_string(label) + " out of range");
    }
  }
  return KnnModel(x, std::vector<int>(y.begin(), y.end()), n_classes, cfg.k);
}

}  // namespace nids::learners
