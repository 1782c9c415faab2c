#pragma once

// Stage 1: CSV loading, cleaning, encoding and standardization.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nids/matrix.hpp"

namespace nids::ingest {

enum class ColumnKind { Numeric, Categorical, Label };
enum class Schema { Kdd, MalMem, Generic };

const char* to_string(ColumnKind kind);
Schema parse_schema(std::string_view name);
const char* to_string(Schema schema);

/// A parsed column. Numeric columns fill `numeric` (unparseable cells become
/// NaN and are removed by clean); other kinds fill `text`.
struct RawColumn {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  std::vector<double> numeric;
  std::vector<std::string> text;

  std::size_t size() const { return kind == ColumnKind::Numeric ? numeric.size() : text.size(); }
};

/// Columnar table as read from disk. All columns have `n_rows` cells and
/// names are unique.
struct RawTable {
  std::vector<RawColumn> columns;
  std::size_t n_rows = 0;
  std::string source;

  const RawColumn& column(std::string_view name) const;
  std::optional<std::size_t> find(std::string_view name) const;
  void validate() const;
};

/// Column names of the headerless KDD'99 file (41 features + outcome).
const std::vector<std::string>& kdd_column_names();

RawTable load_csv(const std::filesystem::path& path, Schema schema);
RawTable parse_csv(std::istream& in, Schema schema, std::string source = "<stream>");

/// Drops rows with a non-finite numeric cell, then exact duplicate rows.
/// Survivors keep their relative order.
RawTable clean(const RawTable& table);

/// KDD outcome (e.g. "smurf", trailing '.' allowed) to one of
/// dos/u2r/r2l/probe/normal.
std::string map_subcategory(std::string_view outcome);

/// Category name -> dense code 0..n-1.
class LabelMap {
 public:
  LabelMap() = default;
  /// Codes assigned by ascending lexicographic order of the distinct names.
  static LabelMap lexicographic(std::vector<std::string> names);

  int code(std::string_view name) const;
  const std::string& name(int code) const;
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, int, std::less<>> codes_;
};

std::vector<int> encode_labels(std::span<const std::string> categories, const LabelMap& map);

struct CategoricalCodes {
  std::string column;
  LabelMap codes;
};

struct EncodedTable {
  RawTable table;
  std::vector<CategoricalCodes> maps;
};

/// Replaces every categorical column by lexicographic integer codes.
EncodedTable encode_categoricals(const RawTable& table);

/// Per-column statistics. `std` is the population standard deviation.
struct ColumnStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<double> min;
  std::vector<double> max;
};

struct Standardized {
  Matrix x;
  ColumnStats stats;
};

/// (x - mean) / std per column; constant columns map to 0.
Standardized standardize(const Matrix& x);
Matrix apply_stats(const Matrix& x, const ColumnStats& stats);

/// Immutable feature matrix with integer labels in [0, n_classes).
class Dataset {
 public:
  Dataset(Matrix x, std::vector<int> y, std::vector<std::string> feature_names,
          std::vector<std::string> class_names, std::optional<ColumnStats> stats = std::nullopt);

  const Matrix& x() const { return x_; }
  const std::vector<int>& y() const { return y_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  const std::optional<ColumnStats>& stats() const { return stats_; }

  std::size_t n_rows() const { return x_.rows(); }
  std::size_t n_features() const { return x_.cols(); }
  std::size_t n_classes() const { return class_names_.size(); }
  std::vector<std::size_t> class_counts() const;

  Dataset select_rows(std::span<const std::size_t> rows) const;
  Dataset select_features(std::span<const std::size_t> features) const;

  /// SHA-256 over shape, matrix bytes and labels.
  std::string content_hash() const;

 private:
  Matrix x_;
  std::vector<int> y_;
  std::vector<std::string> feature_names_;
  std::vector<std::string> class_names_;
  std::optional<ColumnStats> stats_;
};

enum class Task { Binary, Multilabel };
Task parse_task(std::string_view name);
const char* to_string(Task task);

struct PrepareOptions {
  Task task = Task::Binary;
  bool scale = true;
};

struct Prepared {
  Dataset data;
  std::vector<CategoricalCodes> categorical_maps;
  std::size_t rows_loaded = 0;
  std::size_t rows_after_clean = 0;
};

/// clean -> encode_categoricals -> labels -> (optional) standardize.
/// KDD binary labels are Attack/Normal, multilabel DoS/Normal/Probe/R2L/U2R;
/// MalMem drops `Category` and labels by `Class`; generic uses the last column.
Prepared prepare(const RawTable& table, Schema schema, const PrepareOptions& options);

/// Stratified subsample of `n` rows (row order preserved), deterministic in seed.
Dataset sample_rows(const Dataset& data, std::size_t n, std::uint64_t seed);

// Prepared-dataset file: `<stem>.bin` (binary matrix + labels) plus a JSON
// sidecar `<stem>.json` with names, label map, stats, row count and hash.
struct DatasetFileInfo {
  std::string content_hash;
  std::vector<CategoricalCodes> categorical_maps;
};

void write_dataset(const std::filesystem::path& stem, const Dataset& data,
                   std::span<const CategoricalCodes> categorical_maps = {});
Dataset read_dataset(const std::filesystem::path& stem, DatasetFileInfo* info = nullptr);
bool dataset_exists(const std::filesystem::path& stem);

}  // namespace nids::ingest
