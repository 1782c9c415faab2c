#include <algorithm>
#include <cmath>
#include <numeric>

#include "nids/learners.hpp"
#include "nids/parallel.hpp"
#include "nids/random.hpp"

namespace nids::learners {

DecisionTree::DecisionTree(std::size_t n_features, std::size_t n_classes, std::vector<DTNode> nodes)
    : n_features_(n_features), n_classes_(n_classes), nodes_(std::move(nodes)) {}

const DTNode& DecisionTree::leaf(std::span<const double> row) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    const auto& n = nodes_[i];
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
  }
  return nodes_[i];
}

std::size_t DecisionTree::depth() const {
  std::vector<std::size_t> level(nodes_.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (nodes_[i].feature >= 0) {
      level[static_cast<std::size_t>(nodes_[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes_[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

namespace {

double midpoint(double lo, double hi) {
  double mid = lo + (hi - lo) * 0.5;
  return mid > lo ? mid : hi;
}

bool improves(double score, double incumbent) {
  return score > incumbent + 1e-12 * std::max(1.0, std::abs(incumbent));
}

/// Per-feature row order by value (ties by row index), shared by every tree.
std::vector<std::vector<std::uint32_t>> presort(const Matrix& x) {
  std::vector<std::vector<std::uint32_t>> sorted(x.cols());
  parallel_for(x.cols(), [&](std::size_t f) {
    auto& order = sorted[f];
    order.resize(x.rows());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
  });
  return sorted;
}

// Greedy CART growth over a multiset of sample positions. Each position maps
// to a training row; every node owns the same segment [begin, end) of each
// per-feature sorted position list, kept in place by stable partitioning.
class Grower {
 public:
  Grower(const Matrix& x, std::span<const int> y, std::size_t n_classes, const DTConfig& cfg,
         std::size_t features_per_split, Rng* rng)
      : x_(x), y_(y), k_(n_classes), cfg_(cfg), mtry_(features_per_split), rng_(rng) {}

  DecisionTree grow(const std::vector<std::uint32_t>& rows, std::vector<std::vector<std::uint32_t>> sorted);

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;
  };

  DTNode make_leaf(const std::vector<std::size_t>& counts, std::size_t n) const;
  Split best_split(std::size_t begin, std::size_t end, const std::vector<std::size_t>& counts);

  const Matrix& x_;
  std::span<const int> y_;
  std::size_t k_;
  DTConfig cfg_;
  std::size_t mtry_;
  Rng* rng_;

  std::vector<std::uint32_t> rows_;                   // position -> row
  std::vector<std::vector<std::uint32_t>> sorted_;    // per feature, positions
};

DTNode Grower::make_leaf(const std::vector<std::size_t>& counts, std::size_t n) const {
  DTNode leaf;
  leaf.distribution.resize(k_);
  std::size_t top = 0;
  for (std::size_t c = 0; c < k_; ++c) {
    leaf.distribution[c] = static_cast<double>(counts[c]) / static_cast<double>(n);
    if (counts[c] > counts[top]) top = c;
  }
  leaf.label = static_cast<int>(top);
  return leaf;
}

Grower::Split Grower::best_split(std::size_t begin, std::size_t end, const std::vector<std::size_t>& counts) {
  const std::size_t d = x_.cols();
  std::vector<std::size_t> features(d);
  std::iota(features.begin(), features.end(), std::size_t{0});
  if (mtry_ < d) {
    for (std::size_t i = 0; i < mtry_; ++i) {
      std::size_t j = i + uniform_index(*rng_, d - i);
      std::swap(features[i], features[j]);
    }
    features.resize(mtry_);
    std::sort(features.begin(), features.end());
  }

  const double n = static_cast<double>(end - begin);
  // Weighted Gini is minimized where sum(l_c^2)/n_l + sum(r_c^2)/n_r is maximized.
  double parent_sq = 0.0;
  for (auto c : counts) parent_sq += static_cast<double>(c) * static_cast<double>(c);
  Split best;
  best.score = parent_sq / n;

  std::vector<std::size_t> left(k_);
  for (auto f : features) {
    std::fill(left.begin(), left.end(), 0);
    double left_sq = 0.0, right_sq = parent_sq;
    const auto& order = sorted_[f];
    double prev = x_(rows_[order[begin]], f);
    for (std::size_t i = begin; i + 1 < end; ++i) {
      const auto c = static_cast<std::size_t>(y_[rows_[order[i]]]);
      const double l = static_cast<double>(left[c]);
      const double r = static_cast<double>(counts[c] - left[c]);
      left_sq += 2.0 * l + 1.0;
      right_sq -= 2.0 * r - 1.0;
      ++left[c];
      const double next = x_(rows_[order[i + 1]], f);
      prev = x_(rows_[order[i]], f);
      if (next == prev) continue;
      const double nl = static_cast<double>(i + 1 - begin);
      const double score = left_sq / nl + right_sq / (n - nl);
      if (improves(score, best.score)) best = {static_cast<int>(f), midpoint(prev, next), score};
    }
  }
  return best;
}

DecisionTree Grower::grow(const std::vector<std::uint32_t>& rows, std::vector<std::vector<std::uint32_t>> sorted) {
  rows_ = rows;
  sorted_ = std::move(sorted);
  const std::size_t m = rows_.size();
  std::vector<DTNode> nodes;
  std::vector<char> goes_left(m);
  std::vector<std::uint32_t> buffer(m);

  struct Task {
    std::size_t node, begin, end, depth;
  };
  nodes.emplace_back();
  std::vector<Task> stack = {{0, 0, m, 0}};
  std::vector<std::size_t> counts(k_);
  while (!stack.empty()) {
    const Task t = stack.back();
    stack.pop_back();
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = t.begin; i < t.end; ++i) ++counts[static_cast<std::size_t>(y_[rows_[sorted_[0][i]]])];
    const std::size_t n = t.end - t.begin;
    const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
    const bool depth_cap = cfg_.max_depth && t.depth >= *cfg_.max_depth;
    Split split;
    if (!pure && !depth_cap && n >= cfg_.min_samples_split) split = best_split(t.begin, t.end, counts);

    nodes[t.node] = make_leaf(counts, n);
    if (split.feature < 0) continue;

    const auto f = static_cast<std::size_t>(split.feature);
    std::size_t n_left = 0;
    for (std::size_t i = t.begin; i < t.end; ++i) {
      auto pos = sorted_[f][i];
      goes_left[pos] = x_(rows_[pos], f) < split.threshold;
      n_left += goes_left[pos];
    }
    for (auto& order : sorted_) {
      std::size_t l = t.begin, r = 0;
      for (std::size_t i = t.begin; i < t.end; ++i) {
        auto pos = order[i];
        if (goes_left[pos]) {
          order[l++] = pos;
        } else {
          buffer[r++] = pos;
        }
      }
      std::copy_n(buffer.begin(), r, order.begin() + static_cast<std::ptrdiff_t>(l));
    }

    const int left = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes.emplace_back();
    nodes[t.node].feature = split.feature;
    nodes[t.node].threshold = split.threshold;
    nodes[t.node].left = left;
    nodes[t.node].right = left + 1;
    const std::size_t mid = t.begin + n_left;
    stack.push_back({static_cast<std::size_t>(left + 1), mid, t.end, t.depth + 1});
    stack.push_back({static_cast<std::size_t>(left), t.begin, mid, t.depth + 1});
  }
  return DecisionTree(x_.cols(), k_, std::move(nodes));
}

void check_training_input(const Matrix& x, std::span<const int> y, std::size_t n_classes) {
  if (x.rows() == 0) fail(ErrorKind::EmptyData, "cannot train on an empty matrix");
  if (y.size() != x.rows()) fail(ErrorKind::Shape, "label count differs from row count");
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= n_classes) {
      fail(ErrorKind::Argument, "label " + std::to_string(label) + " out of range");
    }
  }
}

}  // namespace

DecisionTree train_dt(const Matrix& x, std::span<const int> y, std::size_t n_classes, const DTConfig& cfg) {
  check_training_input(x, y, n_classes);
  if (cfg.min_samples_split < 2) fail(ErrorKind::Config, "dt.min_samples_split must be >= 2");
  std::vector<std::uint32_t> rows(x.rows());
  std::iota(rows.begin(), rows.end(), 0u);
  return Grower(x, y, n_classes, cfg, x.cols(), nullptr).grow(rows, presort(x));
}

int RandomForest::predict(std::span<const double> row) const {
  std::vector<std::size_t> votes(trees_.front().n_classes(), 0);
  for (const auto& t : trees_) ++votes[static_cast<std::size_t>(t.predict(row))];
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

std::vector<double> RandomForest::proba(std::span<const double> row) const {
  std::vector<double> p(trees_.front().n_classes(), 0.0);
  for (const auto& t : trees_) {
    const auto& dist = t.proba(row);
    for (std::size_t c = 0; c < p.size(); ++c) p[c] += dist[c];
  }
  for (auto& v : p) v /= static_cast<double>(trees_.size());
  return p;
}

RandomForest train_rf(const Matrix& x, std::span<const int> y, std::size_t n_classes, const RFConfig& cfg) {
  check_training_input(x, y, n_classes);
  if (cfg.n_trees < 1) fail(ErrorKind::Config, "rf.n_trees must be >= 1");
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const std::size_t mtry =
      cfg.features_per_split == 0 ? static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))))
                                  : cfg.features_per_split;
  if (mtry < 1 || mtry > d) fail(ErrorKind::Config, "rf.features_per_split must be in [1, d]");
  const auto global = presort(x);

  std::vector<DecisionTree> trees(cfg.n_trees);
  parallel_for(cfg.n_trees, [&](std::size_t t) {
    Rng rng(mix_seed(cfg.seed, t));
    std::vector<std::uint32_t> multiplicity(n, 1);
    if (cfg.bootstrap) {
      std::fill(multiplicity.begin(), multiplicity.end(), 0);
      for (std::size_t i = 0; i < n; ++i) ++multiplicity[uniform_index(rng, n)];
    }
    // Positions are assigned in row order, so the sample depends only on the draw counts.
    std::vector<std::uint32_t> first(n + 1, 0);
    for (std::size_t r = 0; r < n; ++r) first[r + 1] = first[r] + multiplicity[r];
    std::vector<std::uint32_t> rows(first[n]);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::uint32_t c = 0; c < multiplicity[r]; ++c) rows[first[r] + c] = static_cast<std::uint32_t>(r);
    }
    std::vector<std::vector<std::uint32_t>> sorted(d);
    for (std::size_t f = 0; f < d; ++f) {
      sorted[f].reserve(rows.size());
      for (auto r : global[f]) {
        for (std::uint32_t c = 0; c < multiplicity[r]; ++c) sorted[f].push_back(first[r] + c);
      }
    }
    trees[t] = Grower(x, y, n_classes, cfg.tree, mtry, &rng).grow(rows, std::move(sorted));
  });
  return RandomForest(std::move(trees));
}

}  // namespace nids::learners
