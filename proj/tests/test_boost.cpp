#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "nids/boost.hpp"
#include "nids/random.hpp"

using namespace nids;
using namespace nids::boost;

namespace {

// Independent log-loss used as the finite-difference oracle.
// -[y log p + (1-y) log(1-p)] with p = sigmoid(m), written as log(1 + e^m) - y m.
double logistic_loss(double m, int y) {
  return std::max(m, 0.0) + std::log1p(std::exp(-std::abs(m))) - y * m;
}

double softmax_loss(std::vector<double> m, int y) {
  double top = *std::max_element(m.begin(), m.end());
  double z = 0.0;
  for (double v : m) z += std::exp(v - top);
  return top + std::log(z) - m[static_cast<std::size_t>(y)];
}

struct BestSplit {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

// Exhaustive enumeration over every (feature, midpoint) pair of the rows in `rows`.
BestSplit brute_force_split(const Matrix& x, const std::vector<double>& g, const std::vector<double>& h,
                            const std::vector<std::size_t>& rows, const GBConfig& cfg) {
  BestSplit best;
  for (std::size_t f = 0; f < x.cols(); ++f) {
    std::vector<double> values;
    for (auto r : rows) values.push_back(x(r, f));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t i = 1; i < values.size(); ++i) {
      double t = values[i - 1] + (values[i] - values[i - 1]) / 2.0;
      double GL = 0, HL = 0, GR = 0, HR = 0;
      for (auto r : rows) {
        if (x(r, f) < t) {
          GL += g[r];
          HL += h[r];
        } else {
          GR += g[r];
          HR += h[r];
        }
      }
      if (HL < cfg.min_child_weight || HR < cfg.min_child_weight) continue;
      double gain = 0.5 * (GL * GL / (HL + cfg.lambda) + GR * GR / (HR + cfg.lambda) -
                           (GL + GR) * (GL + GR) / (HL + HR + cfg.lambda)) -
                    cfg.gamma;
      if (gain > best.gain + 1e-12 * std::max(1.0, std::abs(best.gain))) best = {gain, static_cast<int>(f), t};
    }
  }
  return best;
}

struct Fixture {
  Matrix x;
  std::vector<int> y;
};

// Two Gaussian clusters around (-2,-2) and (2,2); points closer than 1 to
// the separating line x0 + x1 = 0 are redrawn, so the set is linearly separable.
Fixture separable(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Fixture f{Matrix(n, 2), {}};
  for (std::size_t i = 0; i < n; ++i) {
    int label = static_cast<int>(i % 2);
    double centre = label ? 2.0 : -2.0;
    double a, b;
    do {
      a = centre + standard_normal(rng);
      b = centre + standard_normal(rng);
    } while ((label ? a + b : -(a + b)) < std::sqrt(2.0));
    f.x(i, 0) = a;
    f.x(i, 1) = b;
    f.y.push_back(label);
  }
  return f;
}

double accuracy(const BoostedForest& forest, const Fixture& f) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < f.x.rows(); ++i) hit += forest.predict_class(f.x.row(i)) == f.y[i];
  return static_cast<double>(hit) / static_cast<double>(f.x.rows());
}

}  // namespace

TEST_CASE("grad_hess closed-form examples") {
  std::vector<double> m = {0.0};
  std::vector<int> y = {1};
  auto gh = grad_hess(m, y, Objective::BinaryLogistic);
  CHECK(gh.g[0] == -0.5);
  CHECK(gh.h[0] == 0.25);

  std::vector<double> m2 = {0.0, 0.0};
  std::vector<int> y0 = {0};
  auto s = grad_hess(m2, y0, Objective::Softmax, 2);
  CHECK(s.g == std::vector<double>{-0.5, 0.5});
  CHECK(s.h == std::vector<double>{0.25, 0.25});
}

TEST_CASE("grad_hess matches central finite differences of the log-loss") {
  Rng rng(99);
  const double e1 = 1e-5, e2 = 1e-3;
  for (int trial = 0; trial < 1000; ++trial) {
    double m = -10.0 + 20.0 * uniform01(rng);
    int y = static_cast<int>(uniform_index(rng, 2));
    std::vector<double> mv = {m};
    std::vector<int> yv = {y};
    auto gh = grad_hess(mv, yv, Objective::BinaryLogistic);
    double g_fd = (logistic_loss(m + e1, y) - logistic_loss(m - e1, y)) / (2 * e1);
    double h_fd = (logistic_loss(m + e2, y) - 2 * logistic_loss(m, y) + logistic_loss(m - e2, y)) / (e2 * e2);
    CHECK(std::abs(gh.g[0] - g_fd) <= 1e-6);
    CHECK(std::abs(gh.h[0] - h_fd) <= 1e-6);
    CHECK(gh.h[0] > 0.0);
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 3;
    std::vector<double> m(k);
    for (auto& v : m) v = -10.0 + 20.0 * uniform01(rng);
    int y = static_cast<int>(uniform_index(rng, k));
    std::vector<int> yv = {y};
    auto gh = grad_hess(m, yv, Objective::Softmax, k);
    for (std::size_t c = 0; c < k; ++c) {
      auto plus = m, minus = m, plus2 = m, minus2 = m;
      plus[c] += e1;
      minus[c] -= e1;
      plus2[c] += e2;
      minus2[c] -= e2;
      double g_fd = (softmax_loss(plus, y) - softmax_loss(minus, y)) / (2 * e1);
      double h_fd = (softmax_loss(plus2, y) - 2 * softmax_loss(m, y) + softmax_loss(minus2, y)) / (e2 * e2);
      CHECK(std::abs(gh.g[c] - g_fd) <= 1e-6);
      CHECK(std::abs(gh.h[c] - h_fd) <= 1e-6);
    }
  }
}

TEST_CASE("leaf_weight minimizes the leaf objective") {
  CHECK(leaf_weight(0.0, 3.0, 1.0) == 0.0);
  CHECK(leaf_weight(2.0, 3.0, 1.0) == -0.5);
  CHECK_THROWS_AS(leaf_weight(1.0, 0.0, 0.0), Error);

  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    double G = standard_normal(rng) * 10, H = uniform01(rng) * 10 + 0.01, lambda = uniform01(rng) * 2;
    double gamma = uniform01(rng);
    double w = leaf_weight(G, H, lambda);
    auto objective = [&](double v) { return G * v + 0.5 * (H + lambda) * v * v + gamma; };
    for (double eps : {1e-3, 1e-1}) {
      CHECK(objective(w) < objective(w + eps));
      CHECK(objective(w) < objective(w - eps));
    }
  }
}

TEST_CASE("split_gain examples and symmetry") {
  CHECK(split_gain(1.5, 2.0, 1.5, 2.0, 0.0, 0.0) == 0.0);
  // with lambda > 0 identical halves lose objective
  CHECK(split_gain(1.5, 2.0, 1.5, 2.0, 1.0, 0.0) == doctest::Approx(-0.15));
  CHECK(split_gain(-2, 1, 2, 1, 1, 0) == 2.0);
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    double GL = standard_normal(rng), HL = uniform01(rng) + 0.1, GR = standard_normal(rng), HR = uniform01(rng) + 0.1;
    double lambda = uniform01(rng);
    CHECK(split_gain(GL, HL, GR, HR, lambda, 0.0) == split_gain(GR, HR, GL, HL, lambda, 0.0));
    CHECK(split_gain(GL, HL, GR, HR, lambda, 5.0) == doctest::Approx(split_gain(GL, HL, GR, HR, lambda, 0.0) - 5.0));
  }
}

TEST_CASE("build_tree two-point example and zero gradients") {
  Matrix x(2, 1, std::vector<double>{0.0, 1.0});
  GBConfig cfg;
  cfg.lambda = 0.0;
  cfg.min_child_weight = 0.0;
  std::vector<double> g = {-1.0, 1.0}, h = {1.0, 1.0};
  auto t = build_tree(x, g, h, cfg);
  REQUIRE(t.nodes.size() == 3);
  CHECK(t.nodes[0].feature == 0);
  CHECK(t.nodes[0].threshold == 0.5);
  CHECK(t.nodes[1].weight == 1.0);
  CHECK(t.nodes[2].weight == -1.0);
  CHECK(t.predict(std::vector<double>{0.2}) == 1.0);

  std::vector<double> zeros = {0.0, 0.0};
  auto flat = build_tree(x, zeros, h, GBConfig{});
  CHECK(flat.nodes.size() == 1);
  CHECK(flat.nodes[0].weight == 0.0);
}

TEST_CASE("build_tree splits equal the brute-force oracle at every node") {
  Rng rng(1234);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 2 + uniform_index(rng, 199);
    std::size_t d = 1 + uniform_index(rng, 5);
    Matrix x(n, d);
    for (auto& v : x.data()) v = trial % 3 == 0 ? std::round(standard_normal(rng) * 3) : standard_normal(rng);
    std::vector<double> g(n), h(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = standard_normal(rng);
      h[i] = 0.05 + uniform01(rng);
    }
    GBConfig cfg;
    cfg.max_depth = 1 + uniform_index(rng, 4);
    cfg.lambda = uniform01(rng) * 2;
    cfg.gamma = trial % 2 ? 0.0 : uniform01(rng) * 0.5;
    cfg.min_child_weight = trial % 4 == 0 ? 0.0 : 1.0;
    auto tree = build_tree(x, g, h, cfg);
    CHECK(tree.depth() <= cfg.max_depth);

    // Walk the tree; each node's split must match enumeration over its own rows.
    struct Item {
      std::size_t node;
      std::vector<std::size_t> rows;
      std::size_t depth;
    };
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    std::vector<Item> stack = {{0, all, 0}};
    while (!stack.empty()) {
      auto item = std::move(stack.back());
      stack.pop_back();
      const auto& node = tree.nodes[item.node];
      if (item.depth == cfg.max_depth) {
        CHECK(node.is_leaf());
        continue;
      }
      auto oracle = brute_force_split(x, g, h, item.rows, cfg);
      if (oracle.feature < 0) {
        CHECK(node.is_leaf());
        double G = 0, H = 0;
        for (auto r : item.rows) {
          G += g[r];
          H += h[r];
        }
        CHECK(node.weight == doctest::Approx(-G / (H + cfg.lambda)).epsilon(1e-9));
        continue;
      }
      REQUIRE_FALSE(node.is_leaf());
      CHECK(node.feature == oracle.feature);
      CHECK(node.threshold == oracle.threshold);
      CHECK(node.gain == doctest::Approx(oracle.gain).epsilon(1e-9));
      std::vector<std::size_t> left, right;
      for (auto r : item.rows) (x(r, static_cast<std::size_t>(node.feature)) < node.threshold ? left : right).push_back(r);
      stack.push_back({static_cast<std::size_t>(node.left), left, item.depth + 1});
      stack.push_back({static_cast<std::size_t>(node.right), right, item.depth + 1});
    }
  }
}

TEST_CASE("boosting fits the separable fixture") {
  auto f = separable(100, 17);
  GBConfig cfg;
  cfg.n_rounds = 20;
  cfg.max_depth = 3;
  cfg.eta = 0.3;
  TrainLog log;
  auto forest = train_boosted(f.x, f.y, cfg, &log);
  CHECK(accuracy(forest, f) == 1.0);
  CHECK(forest.trees().size() == 20);
  REQUIRE(log.loss.size() == 21);
  CHECK(log.loss.back() < log.loss.front());

  auto again = train_boosted(f.x, f.y, cfg);
  CHECK(again.to_json() == forest.to_json());

  auto restored = BoostedForest::from_json(nlohmann::ordered_json::parse(forest.to_json().dump()));
  for (std::size_t i = 0; i < f.x.rows(); ++i) CHECK(restored.predict_margin(f.x.row(i)) == forest.predict_margin(f.x.row(i)));
}

TEST_CASE("zero rounds predicts the majority class from base_score") {
  auto f = separable(101, 8);
  GBConfig cfg;
  cfg.n_rounds = 0;
  auto forest = train_boosted(f.x, f.y, cfg);
  double positives = static_cast<double>(std::count(f.y.begin(), f.y.end(), 1));
  double rate = positives / 101.0;
  CHECK(forest.base_score() == doctest::Approx(std::log(rate / (1 - rate))));
  CHECK(forest.predict_margin(f.x.row(0))[0] == forest.base_score());
  CHECK(accuracy(forest, f) == doctest::Approx(std::max(rate, 1 - rate)));
}

TEST_CASE("single-leaf forest margin is base_score + eta * w") {
  GBConfig cfg;
  cfg.eta = 0.5;
  BoostedForest forest(cfg, 1, 0.25);
  CHECK(forest.predict_margin(std::vector<double>{3.0})[0] == 0.25);
  Tree leaf;
  leaf.nodes.push_back(TreeNode{-1, 0.0, -1, -1, 2.0, 0.0, 0.0});
  forest.add_round({leaf});
  CHECK(forest.predict_margin(std::vector<double>{3.0})[0] == 0.25 + 0.5 * 2.0);
  CHECK_THROWS_AS(forest.predict_margin(std::vector<double>{1.0, 2.0}), Error);
}

TEST_CASE("softmax boosting on three clusters") {
  Rng rng(21);
  Matrix x(150, 2);
  std::vector<int> y;
  for (std::size_t i = 0; i < 150; ++i) {
    int c = static_cast<int>(i % 3);
    x(i, 0) = 4.0 * c + standard_normal(rng) * 0.5;
    x(i, 1) = standard_normal(rng);
    y.push_back(c);
  }
  GBConfig cfg;
  cfg.objective = Objective::Softmax;
  cfg.n_classes = 3;
  cfg.n_rounds = 10;
  TrainLog log;
  auto forest = train_boosted(x, y, cfg, &log);
  CHECK(forest.trees().size() == 30);
  CHECK(log.loss.back() < log.loss.front());
  std::size_t hit = 0;
  for (std::size_t i = 0; i < 150; ++i) {
    auto p = forest.predict_proba(x.row(i));
    double sum = 0;
    for (double v : p) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    hit += forest.predict_class(x.row(i)) == y[i];
  }
  CHECK(hit == 150);

  std::vector<int> bad = y;
  bad[0] = 3;
  CHECK_THROWS_AS(train_boosted(x, bad, cfg), Error);
}

TEST_CASE("quantile mode matches exact mode when distinct values fit the bins") {
  auto f = separable(200, 31);
  GBConfig exact;
  exact.n_rounds = 5;
  GBConfig quantile = exact;
  quantile.split_mode = SplitMode::Quantile;
  auto a = train_boosted(f.x, f.y, exact);
  auto b = train_boosted(f.x, f.y, quantile);
  for (std::size_t i = 0; i < f.x.rows(); ++i) CHECK(a.predict_margin(f.x.row(i)) == b.predict_margin(f.x.row(i)));

  quantile.max_bins = 16;
  auto c = train_boosted(f.x, f.y, quantile);
  CHECK(accuracy(c, f) >= 0.9);
}

TEST_CASE("feature importance ordering") {
  GBConfig cfg;
  BoostedForest forest(cfg, 5, 0.0);
  Tree t;
  t.nodes = {TreeNode{3, 0.0, 1, 2, 0, 4.0, 1}, TreeNode{}, TreeNode{}};
  forest.add_round({t});
  auto r = feature_importance(forest);
  CHECK(r.order == std::vector<std::size_t>{3, 0, 1, 2, 4});
  CHECK(r.gains == std::vector<double>{4, 0, 0, 0, 0});

  BoostedForest tie(cfg, 3, 0.0);
  Tree a;
  a.nodes = {TreeNode{2, 0.0, 1, 2, 0, 1.5, 1}, TreeNode{}, TreeNode{}};
  Tree b;
  b.nodes = {TreeNode{1, 0.0, 1, 2, 0, 1.5, 1}, TreeNode{}, TreeNode{}};
  tie.add_round({a});
  tie.add_round({b});
  CHECK(feature_importance(tie).order == std::vector<std::size_t>{1, 2, 0});

  // label copied from feature 0, the rest noise
  Rng rng(77);
  Matrix x(300, 4);
  std::vector<int> y;
  for (std::size_t i = 0; i < 300; ++i) {
    for (std::size_t j = 0; j < 4; ++j) x(i, j) = standard_normal(rng);
    y.push_back(x(i, 0) > 0 ? 1 : 0);
  }
  GBConfig small;
  small.n_rounds = 10;
  auto ranking = feature_importance(train_boosted(x, y, small));
  CHECK(ranking.order.front() == 0);
  for (std::size_t i = 1; i < ranking.gains.size(); ++i) CHECK(ranking.gains[i - 1] >= ranking.gains[i]);

  auto j = ranking_to_json(ranking);
  auto back = ranking_from_json(j);
  CHECK(back.order == ranking.order);
  CHECK(back.gains == ranking.gains);
}

TEST_CASE("config validation") {
  GBConfig cfg;
  cfg.eta = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = GBConfig{};
  cfg.lambda = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = GBConfig{};
  cfg.n_classes = 3;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
