#include "nids/boost.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nids/digest.hpp"
#include "nids/parallel.hpp"

namespace nids::boost {

using json = nlohmann::ordered_json;

const char* to_string(Objective objective) {
  return objective == Objective::BinaryLogistic ? "binary:logistic" : "multi:softmax";
}

const char* to_string(SplitMode mode) { return mode == SplitMode::Exact ? "exact" : "quantile"; }

void GBConfig::validate() const {
  if (!(eta > 0.0 && eta <= 1.0)) fail(ErrorKind::Config, "boost.eta must be in (0, 1]");
  if (!(lambda >= 0.0)) fail(ErrorKind::Config, "boost.lambda must be >= 0");
  if (!(gamma >= 0.0)) fail(ErrorKind::Config, "boost.gamma must be >= 0");
  if (!(min_child_weight >= 0.0)) fail(ErrorKind::Config, "boost.min_child_weight must be >= 0");
  if (max_depth < 1) fail(ErrorKind::Config, "boost.max_depth must be >= 1");
  if (n_classes < 2) fail(ErrorKind::Config, "boost.n_classes must be >= 2");
  if (objective == Objective::BinaryLogistic && n_classes != 2) {
    fail(ErrorKind::Config, "boost.objective: binary:logistic needs exactly 2 classes");
  }
  if (split_mode == SplitMode::Quantile && (max_bins < 2 || max_bins > 65535)) {
    fail(ErrorKind::Config, "boost.max_bins must be in [2, 65535]");
  }
}

// ---------------------------------------------------------------------------
// Tree

double Tree::predict(std::span<const double> row) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
  }
  return nodes[i].weight;
}

std::size_t Tree::depth() const {
  std::vector<std::size_t> level(nodes.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (!nodes[i].is_leaf()) {
      level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

// ---------------------------------------------------------------------------
// objective

namespace {

double sigmoid(double m) {
  if (m >= 0) return 1.0 / (1.0 + std::exp(-m));
  double e = std::exp(m);
  return e / (1.0 + e);
}

void softmax_inplace(std::span<double> v) {
  double top = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (auto& x : v) {
    x = std::exp(x - top);
    sum += x;
  }
  for (auto& x : v) x /= sum;
}

double log_loss(std::span<const double> margin, std::span<const int> y, Objective objective, std::size_t k) {
  double total = 0.0;
  if (objective == Objective::BinaryLogistic) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      double m = margin[i];
      // log(1 + e^m) - y m
      double softplus = m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
      total += softplus - y[i] * m;
    }
  } else {
    for (std::size_t i = 0; i < y.size(); ++i) {
      auto row = margin.subspan(i * k, k);
      double top = *std::max_element(row.begin(), row.end());
      double s = 0.0;
      for (double m : row) s += std::exp(m - top);
      total += top + std::log(s) - row[static_cast<std::size_t>(y[i])];
    }
  }
  return y.empty() ? 0.0 : total / static_cast<double>(y.size());
}

}  // namespace

GradHess grad_hess(std::span<const double> margin, std::span<const int> y, Objective objective,
                   std::size_t n_classes) {
  GradHess out;
  if (objective == Objective::BinaryLogistic) {
    if (margin.size() != y.size()) fail(ErrorKind::Shape, "margin and label lengths differ");
    out.g.resize(y.size());
    out.h.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      double p = sigmoid(margin[i]);
      out.g[i] = p - y[i];
      out.h[i] = p * (1.0 - p);
    }
    return out;
  }
  const std::size_t k = n_classes;
  if (margin.size() != y.size() * k) fail(ErrorKind::Shape, "softmax margins must have n*K entries");
  out.g.resize(margin.size());
  out.h.resize(margin.size());
  std::vector<double> p(k);
  for (std::size_t i = 0; i < y.size(); ++i) {
    std::copy_n(margin.begin() + static_cast<std::ptrdiff_t>(i * k), k, p.begin());
    softmax_inplace(p);
    for (std::size_t c = 0; c < k; ++c) {
      out.g[i * k + c] = p[c] - (static_cast<std::size_t>(y[i]) == c ? 1.0 : 0.0);
      out.h[i * k + c] = p[c] * (1.0 - p[c]);
    }
  }
  return out;
}

double leaf_weight(double G, double H, double lambda) {
  if (!(H + lambda > 0.0)) {
    fail(ErrorKind::DegenerateLeaf, "leaf hessian sum plus lambda is not positive (H=" + std::to_string(H) +
                                        ", lambda=" + std::to_string(lambda) + ")");
  }
  return -G / (H + lambda);
}

double split_gain(double GL, double HL, double GR, double HR, double lambda, double gamma) {
  const double G = GL + GR;
  const double H = HL + HR;
  return 0.5 * (GL * GL / (HL + lambda) + GR * GR / (HR + lambda) - G * G / (H + lambda)) - gamma;
}

// ---------------------------------------------------------------------------
// tree construction

namespace {

double midpoint(double lo, double hi) {
  double mid = lo + (hi - lo) * 0.5;
  return mid > lo ? mid : hi;
}

// Gains within 1e-12 (relative) of the incumbent count as ties, so the
// lowest feature / threshold wins regardless of summation order.
bool improves(double gain, double incumbent) {
  return gain > incumbent + 1e-12 * std::max(1.0, std::abs(incumbent));
}

struct Candidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  double GL = 0.0, HL = 0.0;
  std::size_t bin = 0;  // quantile mode: left side is bins <= bin

  bool found() const { return feature >= 0; }
};

// Presorted columns (exact) or binned columns (quantile) for one matrix,
// reused across boosting rounds.
class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const GBConfig& config) : x_(x), config_(config) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    sorted_.resize(d);
    parallel_for(d, [&](std::size_t f) {
      auto& order = sorted_[f];
      order.resize(n);
      std::iota(order.begin(), order.end(), 0u);
      std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
    });
    if (config.split_mode == SplitMode::Quantile) make_bins();
  }

  Tree build(std::span<const double> g, std::span<const double> h) const;

 private:
  void make_bins();
  void scan_exact(std::size_t f, std::span<const double> g, std::span<const double> h,
                  const std::vector<int>& slot_of_row, const std::vector<double>& G, const std::vector<double>& H,
                  std::vector<Candidate>& best) const;
  void scan_quantile(std::size_t f, std::span<const double> g, std::span<const double> h,
                     const std::vector<int>& slot_of_row, const std::vector<double>& G,
                     const std::vector<double>& H, std::vector<Candidate>& best) const;

  const Matrix& x_;
  GBConfig config_;
  std::vector<std::vector<std::uint32_t>> sorted_;
  std::vector<std::vector<double>> cuts_;          // per feature
  std::vector<std::vector<std::uint16_t>> bins_;   // per feature, per row
};

void TreeBuilder::make_bins() {
  const std::size_t n = x_.rows();
  const std::size_t d = x_.cols();
  cuts_.resize(d);
  bins_.resize(d);
  parallel_for(d, [&](std::size_t f) {
    const auto& order = sorted_[f];
    std::vector<double> distinct;
    for (auto r : order) {
      double v = x_(r, f);
      if (distinct.empty() || distinct.back() != v) distinct.push_back(v);
    }
    auto& cuts = cuts_[f];
    if (distinct.size() <= config_.max_bins) {
      for (std::size_t i = 1; i < distinct.size(); ++i) cuts.push_back(midpoint(distinct[i - 1], distinct[i]));
    } else {
      // Cut just below the value found at evenly spaced ranks.
      for (std::size_t b = 1; b < config_.max_bins; ++b) {
        double v = x_(order[b * n / config_.max_bins], f);
        auto it = std::lower_bound(distinct.begin(), distinct.end(), v);
        if (it == distinct.begin()) continue;
        double c = midpoint(*(it - 1), *it);
        if (cuts.empty() || cuts.back() < c) cuts.push_back(c);
      }
    }
    auto& bins = bins_[f];
    bins.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
      bins[r] = static_cast<std::uint16_t>(std::upper_bound(cuts.begin(), cuts.end(), x_(r, f)) - cuts.begin());
    }
  });
}

void TreeBuilder::scan_exact(std::size_t f, std::span<const double> g, std::span<const double> h,
                             const std::vector<int>& slot_of_row, const std::vector<double>& G,
                             const std::vector<double>& H, std::vector<Candidate>& best) const {
  const std::size_t slots = G.size();
  std::vector<double> GL(slots, 0.0), HL(slots, 0.0), last(slots, 0.0);
  std::vector<char> seen(slots, 0);
  const double mcw = config_.min_child_weight;
  for (auto r : sorted_[f]) {
    int s = slot_of_row[r];
    if (s < 0) continue;
    const double v = x_(r, f);
    if (seen[s] && v != last[s]) {
      const double GR = G[s] - GL[s];
      const double HR = H[s] - HL[s];
      if (HL[s] >= mcw && HR >= mcw) {
        double gain = split_gain(GL[s], HL[s], GR, HR, config_.lambda, config_.gamma);
        if (improves(gain, best[s].gain)) {
          best[s] = Candidate{gain, static_cast<int>(f), midpoint(last[s], v), GL[s], HL[s], 0};
        }
      }
    }
    GL[s] += g[r];
    HL[s] += h[r];
    last[s] = v;
    seen[s] = 1;
  }
}

void TreeBuilder::scan_quantile(std::size_t f, std::span<const double> g, std::span<const double> h,
                                const std::vector<int>& slot_of_row, const std::vector<double>& G,
                                const std::vector<double>& H, std::vector<Candidate>& best) const {
  const std::size_t slots = G.size();
  const auto& cuts = cuts_[f];
  const std::size_t nb = cuts.size() + 1;
  if (nb < 2) return;
  std::vector<double> hg(slots * nb, 0.0), hh(slots * nb, 0.0);
  std::vector<std::uint32_t> hc(slots * nb, 0);
  const auto& bins = bins_[f];
  for (std::size_t r = 0; r < bins.size(); ++r) {
    int s = slot_of_row[r];
    if (s < 0) continue;
    std::size_t at = static_cast<std::size_t>(s) * nb + bins[r];
    hg[at] += g[r];
    hh[at] += h[r];
    ++hc[at];
  }
  const double mcw = config_.min_child_weight;
  for (std::size_t s = 0; s < slots; ++s) {
    double GL = 0.0, HL = 0.0;
    std::size_t nl = 0, total = 0;
    for (std::size_t b = 0; b < nb; ++b) total += hc[s * nb + b];
    for (std::size_t b = 0; b + 1 < nb; ++b) {
      GL += hg[s * nb + b];
      HL += hh[s * nb + b];
      nl += hc[s * nb + b];
      if (nl == 0 || nl == total || hc[s * nb + b] == 0) continue;
      const double GR = G[s] - GL;
      const double HR = H[s] - HL;
      if (HL < mcw || HR < mcw) continue;
      double gain = split_gain(GL, HL, GR, HR, config_.lambda, config_.gamma);
      if (improves(gain, best[s].gain)) best[s] = Candidate{gain, static_cast<int>(f), cuts[b], GL, HL, b};
    }
  }
}

Tree TreeBuilder::build(std::span<const double> g, std::span<const double> h) const {
  const std::size_t n = x_.rows();
  const std::size_t d = x_.cols();
  if (n == 0) fail(ErrorKind::Internal, "build_tree called with no samples");
  if (g.size() != n || h.size() != n) fail(ErrorKind::Shape, "gradient length differs from row count");

  Tree tree;
  struct Pending {
    std::size_t node;
    double G, H;
    std::size_t depth;
  };
  double G0 = 0.0, H0 = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    G0 += g[r];
    H0 += h[r];
  }
  tree.nodes.push_back(TreeNode{});
  tree.nodes[0].cover = H0;

  std::vector<int> node_of_row(n, 0);
  std::vector<Pending> frontier;
  auto finish_leaf = [&](const Pending& p) {
    tree.nodes[p.node].weight = leaf_weight(p.G, p.H, config_.lambda);
  };
  frontier.push_back({0, G0, H0, 0});

  std::vector<int> slot_of_row(n, -1);
  while (!frontier.empty()) {
    const std::size_t slots = frontier.size();
    std::vector<int> slot_of_node(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < slots; ++s) slot_of_node[frontier[s].node] = static_cast<int>(s);
    for (std::size_t r = 0; r < n; ++r) {
      slot_of_row[r] = node_of_row[r] < 0 ? -1 : slot_of_node[static_cast<std::size_t>(node_of_row[r])];
    }
    std::vector<double> G(slots), H(slots);
    for (std::size_t s = 0; s < slots; ++s) {
      G[s] = frontier[s].G;
      H[s] = frontier[s].H;
    }

    std::vector<std::vector<Candidate>> per_feature(d, std::vector<Candidate>(slots));
    parallel_for(d, [&](std::size_t f) {
      if (config_.split_mode == SplitMode::Exact) {
        scan_exact(f, g, h, slot_of_row, G, H, per_feature[f]);
      } else {
        scan_quantile(f, g, h, slot_of_row, G, H, per_feature[f]);
      }
    });
    // Fixed-order reduction keeps the lowest feature on ties.
    std::vector<Candidate> best(slots);
    for (std::size_t f = 0; f < d; ++f) {
      for (std::size_t s = 0; s < slots; ++s) {
        if (per_feature[f][s].found() && improves(per_feature[f][s].gain, best[s].gain)) best[s] = per_feature[f][s];
      }
    }

    std::vector<Pending> next;
    std::vector<std::pair<int, int>> children(slots, {-1, -1});
    for (std::size_t s = 0; s < slots; ++s) {
      const auto& p = frontier[s];
      const auto& c = best[s];
      if (!c.found()) {
        finish_leaf(p);
        continue;
      }
      const int left = static_cast<int>(tree.nodes.size());
      const int right = left + 1;
      tree.nodes.push_back(TreeNode{});
      tree.nodes.push_back(TreeNode{});
      auto& node = tree.nodes[p.node];
      node.feature = c.feature;
      node.threshold = c.threshold;
      node.left = left;
      node.right = right;
      node.gain = c.gain;
      children[s] = {left, right};
      Pending lp{static_cast<std::size_t>(left), c.GL, c.HL, p.depth + 1};
      Pending rp{static_cast<std::size_t>(right), p.G - c.GL, p.H - c.HL, p.depth + 1};
      tree.nodes[lp.node].cover = lp.H;
      tree.nodes[rp.node].cover = rp.H;
      for (auto* child : {&lp, &rp}) {
        if (child->depth >= config_.max_depth) {
          finish_leaf(*child);
        } else {
          next.push_back(*child);
        }
      }
    }

    // Route rows; rows that reach a finished leaf leave the scan.
    std::vector<char> open(tree.nodes.size(), 0);
    for (const auto& p : next) open[p.node] = 1;
    for (std::size_t r = 0; r < n; ++r) {
      int s = slot_of_row[r];
      if (s < 0) continue;
      const auto& parent = tree.nodes[frontier[static_cast<std::size_t>(s)].node];
      if (parent.is_leaf()) {
        node_of_row[r] = -1;
        continue;
      }
      int child;
      if (config_.split_mode == SplitMode::Quantile) {
        child = bins_[static_cast<std::size_t>(parent.feature)][r] <= best[static_cast<std::size_t>(s)].bin
                    ? parent.left
                    : parent.right;
      } else {
        child = x_(r, static_cast<std::size_t>(parent.feature)) < parent.threshold ? parent.left : parent.right;
      }
      node_of_row[r] = open[static_cast<std::size_t>(child)] ? child : -1;
    }
    frontier = std::move(next);
  }
  return tree;
}

}  // namespace

Tree build_tree(const Matrix& x, std::span<const double> g, std::span<const double> h, const GBConfig& config) {
  config.validate();
  return TreeBuilder(x, config).build(g, h);
}

// ---------------------------------------------------------------------------
// forest

BoostedForest::BoostedForest(GBConfig config, std::size_t n_features, double base_score)
    : config_(config), n_features_(n_features), base_score_(base_score), cum_gain_(n_features, 0.0) {}

std::size_t BoostedForest::n_groups() const {
  return config_.objective == Objective::Softmax ? config_.n_classes : 1;
}

void BoostedForest::add_round(std::vector<Tree> round) {
  if (round.size() != n_groups()) fail(ErrorKind::Internal, "round has wrong tree count");
  for (auto& t : round) {
    for (const auto& node : t.nodes) {
      if (!node.is_leaf()) cum_gain_[static_cast<std::size_t>(node.feature)] += node.gain;
    }
    trees_.push_back(std::move(t));
  }
}

std::vector<double> BoostedForest::predict_margin(std::span<const double> row) const {
  if (row.size() != n_features_) {
    fail(ErrorKind::Shape, "row has " + std::to_string(row.size()) + " features, forest expects " +
                               std::to_string(n_features_));
  }
  const std::size_t groups = n_groups();
  std::vector<double> sums(groups, 0.0);
  for (std::size_t t = 0; t < trees_.size(); ++t) sums[t % groups] += trees_[t].predict(row);
  std::vector<double> margin(groups);
  for (std::size_t k = 0; k < groups; ++k) margin[k] = base_score_ + config_.eta * sums[k];
  return margin;
}

int BoostedForest::predict_class(std::span<const double> row) const {
  auto m = predict_margin(row);
  if (config_.objective == Objective::BinaryLogistic) return sigmoid(m[0]) >= 0.5 ? 1 : 0;
  return static_cast<int>(std::max_element(m.begin(), m.end()) - m.begin());
}

std::vector<double> BoostedForest::predict_proba(std::span<const double> row) const {
  auto m = predict_margin(row);
  if (config_.objective == Objective::BinaryLogistic) {
    double p = sigmoid(m[0]);
    return {1.0 - p, p};
  }
  softmax_inplace(m);
  return m;
}

BoostedForest train_boosted(const Matrix& x, std::span<const int> y, const GBConfig& config, TrainLog* log) {
  config.validate();
  const std::size_t n = x.rows();
  if (y.size() != n) fail(ErrorKind::Shape, "label count differs from row count");
  if (n == 0) fail(ErrorKind::EmptyData, "cannot train on an empty matrix");
  const std::size_t k = config.n_classes;
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      fail(ErrorKind::Config, "label " + std::to_string(label) + " is inconsistent with objective " +
                                  to_string(config.objective) + " over " + std::to_string(k) + " classes");
    }
  }

  double base = 0.0;
  if (config.objective == Objective::BinaryLogistic) {
    double positives = static_cast<double>(std::count(y.begin(), y.end(), 1));
    double rate = std::clamp(positives / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
    base = std::log(rate / (1.0 - rate));
  }
  BoostedForest forest(config, x.cols(), base);
  const std::size_t groups = forest.n_groups();
  std::vector<double> margin(n * groups, base);
  if (log) log->loss = {log_loss(margin, y, config.objective, groups)};

  if (config.n_rounds == 0) return forest;
  TreeBuilder builder(x, config);
  std::vector<double> gk(n), hk(n);
  for (std::size_t round = 0; round < config.n_rounds; ++round) {
    auto gh = grad_hess(margin, y, config.objective, k);
    std::vector<Tree> trees;
    for (std::size_t c = 0; c < groups; ++c) {
      for (std::size_t r = 0; r < n; ++r) {
        gk[r] = gh.g[r * groups + c];
        hk[r] = gh.h[r * groups + c];
      }
      trees.push_back(builder.build(gk, hk));
    }
    for (std::size_t c = 0; c < groups; ++c) {
      for (std::size_t r = 0; r < n; ++r) margin[r * groups + c] += config.eta * trees[c].predict(x.row(r));
    }
    forest.add_round(std::move(trees));
    if (log) log->loss.push_back(log_loss(margin, y, config.objective, groups));
  }
  return forest;
}

BoostedForest train_boosted(const ingest::Dataset& data, const GBConfig& config, TrainLog* log) {
  return train_boosted(data.x(), data.y(), config, log);
}

FeatureRanking feature_importance(const BoostedForest& forest) {
  const auto& gain = forest.cum_gain();
  FeatureRanking ranking;
  ranking.order.resize(gain.size());
  std::iota(ranking.order.begin(), ranking.order.end(), std::size_t{0});
  std::stable_sort(ranking.order.begin(), ranking.order.end(),
                   [&](std::size_t a, std::size_t b) { return gain[a] > gain[b]; });
  for (auto f : ranking.order) ranking.gains.push_back(gain[f]);
  ranking.source = sha256_hex(forest.to_json().dump());
  return ranking;
}

// ---------------------------------------------------------------------------
// serialization

json config_to_json(const GBConfig& c) {
  return json{{"n_rounds", c.n_rounds},
              {"max_depth", c.max_depth},
              {"eta", c.eta},
              {"lambda", c.lambda},
              {"gamma", c.gamma},
              {"min_child_weight", c.min_child_weight},
              {"objective", to_string(c.objective)},
              {"n_classes", c.n_classes},
              {"split_mode", to_string(c.split_mode)},
              {"max_bins", c.max_bins}};
}

GBConfig config_from_json(const json& j) {
  GBConfig c;
  c.n_rounds = j.at("n_rounds").get<std::size_t>();
  c.max_depth = j.at("max_depth").get<std::size_t>();
  c.eta = j.at("eta").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.min_child_weight = j.at("min_child_weight").get<double>();
  c.objective = j.at("objective").get<std::string>() == "binary:logistic" ? Objective::BinaryLogistic : Objective::Softmax;
  c.n_classes = j.at("n_classes").get<std::size_t>();
  c.split_mode = j.at("split_mode").get<std::string>() == "exact" ? SplitMode::Exact : SplitMode::Quantile;
  c.max_bins = j.at("max_bins").get<std::size_t>();
  c.validate();
  return c;
}

json BoostedForest::to_json() const {
  json trees = json::array();
  for (const auto& t : trees_) {
    json feature = json::array(), threshold = json::array(), left = json::array(), right = json::array(),
         weight = json::array(), gain = json::array(), cover = json::array();
    for (const auto& n : t.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      weight.push_back(n.weight);
      gain.push_back(n.gain);
      cover.push_back(n.cover);
    }
    trees.push_back({{"feature", feature},
                     {"threshold", threshold},
                     {"left", left},
                     {"right", right},
                     {"weight", weight},
                     {"gain", gain},
                     {"cover", cover}});
  }
  return json{{"format", "nids.boosted_forest"},
              {"version", 1},
              {"config", config_to_json(config_)},
              {"n_features", n_features_},
              {"base_score", base_score_},
              {"cum_gain", cum_gain_},
              {"trees", trees}};
}

BoostedForest BoostedForest::from_json(const json& j) {
  if (j.value("format", "") != "nids.boosted_forest" || j.value("version", 0) != 1) {
    fail(ErrorKind::Parse, "not a version-1 boosted forest document");
  }
  BoostedForest forest(config_from_json(j.at("config")), j.at("n_features").get<std::size_t>(),
                       j.at("base_score").get<double>());
  for (const auto& jt : j.at("trees")) {
    Tree t;
    const auto& feature = jt.at("feature");
    for (std::size_t i = 0; i < feature.size(); ++i) {
      TreeNode n;
      n.feature = feature[i].get<int>();
      n.threshold = jt.at("threshold")[i].get<double>();
      n.left = jt.at("left")[i].get<int>();
      n.right = jt.at("right")[i].get<int>();
      n.weight = jt.at("weight")[i].get<double>();
      n.gain = jt.at("gain")[i].get<double>();
      n.cover = jt.at("cover")[i].get<double>();
      t.nodes.push_back(n);
    }
    forest.trees_.push_back(std::move(t));
  }
  forest.cum_gain_ = j.at("cum_gain").get<std::vector<double>>();
  if (forest.trees_.size() % forest.n_groups() != 0) fail(ErrorKind::Parse, "tree count is not a multiple of groups");
  return forest;
}

json ranking_to_json(const FeatureRanking& ranking, std::span<const std::string> names) {
  json entries = json::array();
  for (std::size_t i = 0; i < ranking.order.size(); ++i) {
    json e = {{"rank", i + 1}, {"feature", ranking.order[i]}, {"gain", ranking.gains[i]}};
    if (!names.empty()) e["name"] = names[ranking.order[i]];
    entries.push_back(e);
  }
  return json{{"format", "nids.ranking"}, {"version", 1}, {"source", ranking.source}, {"features", entries}};
}

FeatureRanking ranking_from_json(const json& j) {
  if (j.value("format", "") != "nids.ranking") fail(ErrorKind::Parse, "not a ranking document");
  FeatureRanking r;
  r.source = j.value("source", "");
  for (const auto& e : j.at("features")) {
    r.order.push_back(e.at("feature").get<std::size_t>());
    r.gains.push_back(e.at("gain").get<double>());
  }
  return r;
}

}  // namespace nids::boost
