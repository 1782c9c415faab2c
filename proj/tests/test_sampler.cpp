#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "nids/random.hpp"
#include "nids/sampler.hpp"

using namespace nids;
using namespace nids::sampler;
using nids::ingest::Dataset;

namespace {

Dataset make_dataset(const std::vector<std::size_t>& counts, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::size_t n = 0;
  for (auto c : counts) n += c;
  Matrix x(n, d);
  std::vector<int> y;
  std::vector<std::string> classes;
  std::size_t r = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    classes.push_back("c" + std::to_string(c));
    for (std::size_t i = 0; i < counts[c]; ++i, ++r) {
      for (std::size_t j = 0; j < d; ++j) x(r, j) = standard_normal(rng) + 3.0 * static_cast<double>(c);
      y.push_back(static_cast<int>(c));
    }
  }
  std::vector<std::string> names;
  for (std::size_t j = 0; j < d; ++j) names.push_back("f" + std::to_string(j));
  return Dataset(std::move(x), std::move(y), std::move(names), std::move(classes));
}

// True when s = a + u (b - a) for some u in [0, 1), checked per coordinate.
bool on_segment(std::span<const double> s, std::span<const double> a, std::span<const double> b) {
  double u = -1.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    double span = b[j] - a[j];
    if (std::abs(span) < 1e-12) {
      if (std::abs(s[j] - a[j]) > 1e-9) return false;
      continue;
    }
    double uj = (s[j] - a[j]) / span;
    if (u < 0.0) {
      u = uj;
    } else if (std::abs(uj - u) > 1e-9) {
      return false;
    }
  }
  return u < 0.0 || (u >= -1e-12 && u < 1.0 + 1e-12);
}

}  // namespace

TEST_CASE("knn_index examples") {
  Matrix pts(3, 1, std::vector<double>{0, 1, 10});
  auto nn = knn_index(pts, 1);
  CHECK(nn == std::vector<std::vector<std::size_t>>{{1}, {0}, {1}});

  Matrix same(4, 2, 1.5);
  auto ties = knn_index(same, 2);
  CHECK(ties[0] == std::vector<std::size_t>{1, 2});
  CHECK(ties[1] == std::vector<std::size_t>{0, 2});
  CHECK(ties[3] == std::vector<std::size_t>{0, 1});

  auto all = knn_index(pts, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    auto sorted = all[i];
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < 3; ++j)
      if (j != i) others.push_back(j);
    CHECK(sorted == others);
  }

  CHECK_THROWS_AS(knn_index(pts, 3), Error);
  CHECK_THROWS_AS(knn_index(pts, 0), Error);
}

TEST_CASE("knn_index matches brute-force sort") {
  Rng rng(11);
  Matrix pts(40, 3);
  for (auto& v : pts.data()) v = std::round(standard_normal(rng) * 2.0);  // rounding creates ties
  auto nn = knn_index(pts, 5);
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t j = 0; j < pts.rows(); ++j) {
      if (j == i) continue;
      double d2 = 0;
      for (std::size_t c = 0; c < 3; ++c) d2 += (pts(i, c) - pts(j, c)) * (pts(i, c) - pts(j, c));
      all.emplace_back(d2, j);
    }
    std::sort(all.begin(), all.end());
    for (std::size_t t = 0; t < 5; ++t) CHECK(nn[i][t] == all[t].second);
  }
}

TEST_CASE("smote equalizes the KDD multilabel class counts arithmetic") {
  // Scaled-down counts keep the test fast; the arithmetic is the same.
  const std::vector<std::size_t> counts = {3914, 972, 41, 11, 2};
  auto data = make_dataset(counts, 2, 5);
  auto out = smote(data, {5, 1});
  for (auto c : out.data.class_counts()) CHECK(c == 3914);
  CHECK(out.data.n_rows() == 5 * 3914);
  CHECK(out.classes[4].k_used == 1);
  CHECK(out.classes[3].k_used == 5);
  CHECK(out.synthetic_rows() == 5 * 3914 - data.n_rows());
  // Full-size arithmetic: five classes at 391,458 rows each.
  CHECK(5 * std::size_t{391458} == 1957290);
}

TEST_CASE("smote edge cases") {
  auto balanced = make_dataset({10, 10}, 3, 2);
  auto same = smote(balanced, {});
  CHECK(same.synthetic_rows() == 0);
  CHECK(same.data.x() == balanced.x());
  CHECK(same.data.y() == balanced.y());

  Matrix x(7, 2, std::vector<double>{0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 9, 9, 9, 9});
  Dataset twin(x, {0, 0, 0, 0, 0, 1, 1}, {"a", "b"}, {"maj", "min"});
  auto t = smote(twin, {5, 3});
  for (std::size_t r = 7; r < t.data.n_rows(); ++r) {
    CHECK(t.data.x()(r, 0) == 9.0);
    CHECK(t.data.x()(r, 1) == 9.0);
    CHECK(t.data.y()[r] == 1);
  }

  Dataset single(Matrix(3, 1, std::vector<double>{0, 1, 2}), {0, 0, 1}, {"a"}, {"x", "y"});
  try {
    smote(single, {});
    FAIL("expected balancing error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Balancing);
    CHECK(std::string(e.what()).find("'y'") != std::string::npos);
  }
  Dataset one_class(Matrix(3, 1, std::vector<double>{0, 1, 2}), {0, 0, 0}, {"a"}, {"x"});
  CHECK_THROWS_AS(smote(one_class, {}), Error);
}

TEST_CASE("smote laws on random imbalanced fixtures") {
  Rng meta(2024);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t k = 2 + uniform_index(meta, 3);
    std::vector<std::size_t> counts(k);
    for (auto& c : counts) c = 2 + uniform_index(meta, 40);
    std::size_t d = 1 + uniform_index(meta, 4);
    auto data = make_dataset(counts, d, meta());
    SmoteConfig cfg{1 + uniform_index(meta, 6), meta()};
    auto out = smote(data, cfg);

    const std::size_t majority = *std::max_element(counts.begin(), counts.end());
    for (auto c : out.data.class_counts()) CHECK(c == majority);

    // originals preserved verbatim as a prefix
    for (std::size_t r = 0; r < data.n_rows(); ++r) {
      CHECK(out.data.y()[r] == data.y()[r]);
      for (std::size_t j = 0; j < d; ++j) CHECK(out.data.x()(r, j) == data.x()(r, j));
    }

    // every synthetic row lies on a segment from a minority point to one of its neighbours
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t r = 0; r < data.n_rows(); ++r) members[static_cast<std::size_t>(data.y()[r])].push_back(r);
    for (std::size_t r = data.n_rows(); r < out.data.n_rows(); ++r) {
      auto c = static_cast<std::size_t>(out.data.y()[r]);
      Matrix minority = data.x().select_rows(members[c]);
      auto nn = knn_index(minority, std::min(cfg.k_neighbors, minority.rows() - 1));
      bool found = false;
      for (std::size_t a = 0; a < minority.rows() && !found; ++a) {
        for (auto b : nn[a]) {
          if (on_segment(out.data.x().row(r), minority.row(a), minority.row(b))) {
            found = true;
            break;
          }
        }
      }
      CHECK(found);
    }

    auto again = smote(data, cfg);
    CHECK(again.data.x() == out.data.x());
    CHECK(again.data.y() == out.data.y());
  }
}
