#pragma once

// SMOTE oversampling of minority classes up to the majority count.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "nids/ingest.hpp"
#include "nids/matrix.hpp"

namespace nids::sampler {

struct SmoteConfig {
  std::size_t k_neighbors = 5;
  std::uint64_t seed = 42;
};

/// How one class was oversampled.
struct ClassBalance {
  int label = 0;
  std::size_t original = 0;
  std::size_t synthetic = 0;
  std::size_t k_used = 0;  // after clamping to m-1
};

struct SmoteResult {
  ingest::Dataset data;
  std::vector<ClassBalance> classes;

  std::size_t synthetic_rows() const;
};

/// For every row, the indices of its k nearest other rows (Euclidean),
/// nearest first; distance ties go to the lower index. Requires k < rows.
std::vector<std::vector<std::size_t>> knn_index(const Matrix& points, std::size_t k);

/// Oversamples every class to the pre-call majority count. Original rows come
/// first and unchanged; synthetic rows follow grouped by ascending class.
/// Each synthetic row is a + u*(b - a) with b among a's k nearest same-class
/// neighbours and u uniform in [0, 1). Class c draws from its own stream
/// seeded by mix_seed(cfg.seed, c).
SmoteResult smote(const ingest::Dataset& data, const SmoteConfig& cfg);

/// True when all classes already have the same count.
bool is_balanced(const ingest::Dataset& data);

}  // namespace nids::sampler
