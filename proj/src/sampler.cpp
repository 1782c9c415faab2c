#include "nids/sampler.hpp"

#include <algorithm>
#include <limits>

#include <spdlog/spdlog.h>

#include "nids/parallel.hpp"
#include "nids/random.hpp"

namespace nids::sampler {

std::size_t SmoteResult::synthetic_rows() const {
  std::size_t n = 0;
  for (const auto& c : classes) n += c.synthetic;
  return n;
}

std::vector<std::vector<std::size_t>> knn_index(const Matrix& points, std::size_t k) {
  const std::size_t n = points.rows();
  if (k == 0 || k >= n) {
    fail(ErrorKind::Argument, "knn_index needs 0 < k < n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
  }
  std::vector<std::vector<std::size_t>> out(n);
  parallel_for(n, [&](std::size_t i) {
    // Sorted (distance, index) buffer of the best k so far.
    std::vector<std::pair<double, std::size_t>> best;
    best.reserve(k + 1);
    auto pi = points.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      auto pj = points.row(j);
      double d2 = 0.0;
      for (std::size_t c = 0; c < pi.size(); ++c) {
        double diff = pi[c] - pj[c];
        d2 += diff * diff;
      }
      if (best.size() == k && d2 >= best.back().first) continue;  // ties keep the lower index
      auto pos = std::upper_bound(best.begin(), best.end(), std::make_pair(d2, j));
      best.insert(pos, {d2, j});
      if (best.size() > k) best.pop_back();
    }
    out[i].reserve(k);
    for (const auto& b : best) out[i].push_back(b.second);
  });
  return out;
}

bool is_balanced(const ingest::Dataset& data) {
  auto counts = data.class_counts();
  return std::adjacent_find(counts.begin(), counts.end(), std::not_equal_to<>()) == counts.end();
}

SmoteResult smote(const ingest::Dataset& data, const SmoteConfig& cfg) {
  if (cfg.k_neighbors < 1) fail(ErrorKind::Config, "smote.k_neighbors must be >= 1");
  const auto counts = data.class_counts();
  const std::size_t present = static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
  if (present < 2) fail(ErrorKind::Balancing, "SMOTE needs at least two classes");
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] < 2) {
      fail(ErrorKind::Balancing, "class '" + data.class_names()[c] + "' has " + std::to_string(counts[c]) +
                                     " sample(s); SMOTE needs at least 2");
    }
  }
  const std::size_t majority = *std::max_element(counts.begin(), counts.end());
  const std::size_t d = data.n_features();

  std::vector<std::vector<std::size_t>> members(counts.size());
  for (std::size_t r = 0; r < data.n_rows(); ++r) members[static_cast<std::size_t>(data.y()[r])].push_back(r);

  std::vector<ClassBalance> balance(counts.size());
  std::vector<Matrix> synthetic(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    balance[c].label = static_cast<int>(c);
    balance[c].original = counts[c];
    balance[c].synthetic = majority - counts[c];
    balance[c].k_used = std::min(cfg.k_neighbors, counts[c] - 1);
    if (balance[c].synthetic > 0 && balance[c].k_used < cfg.k_neighbors) {
      spdlog::warn("smote: class '{}' has {} samples; k clamped from {} to {}", data.class_names()[c], counts[c],
                   cfg.k_neighbors, balance[c].k_used);
    }
  }

  for (std::size_t c = 0; c < counts.size(); ++c) {
    const auto deficit = balance[c].synthetic;
    synthetic[c] = Matrix(0, d);
    if (deficit == 0) continue;
    const Matrix minority = data.x().select_rows(members[c]);
    const auto neighbors = knn_index(minority, balance[c].k_used);
    Rng rng(mix_seed(cfg.seed, c));
    Matrix out(deficit, d);
    for (std::size_t s = 0; s < deficit; ++s) {
      const std::size_t a = uniform_index(rng, minority.rows());
      const std::size_t b = neighbors[a][uniform_index(rng, neighbors[a].size())];
      const double u = uniform01(rng);
      auto ra = minority.row(a);
      auto rb = minority.row(b);
      auto dst = out.row(s);
      for (std::size_t j = 0; j < d; ++j) dst[j] = ra[j] + u * (rb[j] - ra[j]);
    }
    synthetic[c] = std::move(out);
  }

  std::size_t total = data.n_rows();
  for (const auto& b : balance) total += b.synthetic;
  std::vector<double> cells;
  cells.reserve(total * d);
  cells.insert(cells.end(), data.x().data().begin(), data.x().data().end());
  std::vector<int> labels(data.y());
  labels.reserve(total);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    cells.insert(cells.end(), synthetic[c].data().begin(), synthetic[c].data().end());
    labels.insert(labels.end(), synthetic[c].rows(), static_cast<int>(c));
  }
  ingest::Dataset out(Matrix(total, d, std::move(cells)), std::move(labels), data.feature_names(),
                      data.class_names(), data.stats());
  return SmoteResult{std::move(out), std::move(balance)};
}

}  // namespace nids::sampler
