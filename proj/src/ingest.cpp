#include "nids/ingest.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "nids/digest.hpp"
#include "nids/random.hpp"

namespace nids::ingest {

using json = nlohmann::ordered_json;

const char* to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::Numeric: return "numeric";
    case ColumnKind::Categorical: return "categorical";
    case ColumnKind::Label: return "label";
  }
  return "?";
}

Schema parse_schema(std::string_view name) {
  if (name == "kdd") return Schema::Kdd;
  if (name == "malmem") return Schema::MalMem;
  if (name == "generic") return Schema::Generic;
  fail(ErrorKind::Config, "unknown dataset schema '" + std::string(name) + "' (expected kdd|malmem|generic)");
}

const char* to_string(Schema schema) {
  switch (schema) {
    case Schema::Kdd: return "kdd";
    case Schema::MalMem: return "malmem";
    case Schema::Generic: return "generic";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  if (name == "binary") return Task::Binary;
  if (name == "multilabel") return Task::Multilabel;
  fail(ErrorKind::Config, "unknown task '" + std::string(name) + "' (expected binary|multilabel)");
}

const char* to_string(Task task) { return task == Task::Binary ? "binary" : "multilabel"; }

// ---------------------------------------------------------------------------
// RawTable

std::optional<std::size_t> RawTable::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == name) return i;
  }
  return std::nullopt;
}

const RawColumn& RawTable::column(std::string_view name) const {
  auto i = find(name);
  if (!i) fail(ErrorKind::Mapping, "no column named '" + std::string(name) + "'");
  return columns[*i];
}

void RawTable::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& c : columns) {
    if (!seen.insert(c.name).second) fail(ErrorKind::Parse, "duplicate column name '" + c.name + "'");
    if (c.size() != n_rows) fail(ErrorKind::Internal, "column '" + c.name + "' has ragged length");
  }
}

const std::vector<std::string>& kdd_column_names() {
  static const std::vector<std::string> names = {
      "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes", "land",
      "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in", "num_compromised",
      "root_shell", "su_attempted", "num_root", "num_file_creations", "num_shells",
      "num_access_files", "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
      "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate", "srv_rerror_rate",
      "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate", "dst_host_count",
      "dst_host_srv_count", "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
      "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate", "dst_host_serror_rate",
      "dst_host_srv_serror_rate", "dst_host_rerror_rate", "dst_host_srv_rerror_rate", "outcome"};
  return names;
}

// ---------------------------------------------------------------------------
// CSV parsing

namespace {

constexpr std::size_t kMalMemColumns = 57;

// Splits one RFC-4180 record. Quoted fields may contain commas and doubled
// quotes; embedded newlines are not supported.
void split_record(std::string_view line, std::vector<std::string>& out) {
  out.clear();
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

double number_or_nan(std::string_view s) {
  return parse_number(s).value_or(std::numeric_limits<double>::quiet_NaN());
}

std::vector<ColumnKind> kinds_for(Schema schema, const std::vector<std::string>& names) {
  std::vector<ColumnKind> kinds(names.size(), ColumnKind::Numeric);
  switch (schema) {
    case Schema::Kdd:
      kinds[1] = kinds[2] = kinds[3] = ColumnKind::Categorical;
      kinds.back() = ColumnKind::Label;
      break;
    case Schema::MalMem:
      for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == "Category" || names[i] == "Class") kinds[i] = ColumnKind::Label;
      }
      break;
    case Schema::Generic:
      kinds.back() = ColumnKind::Label;
      break;
  }
  return kinds;
}

}  // namespace

RawTable parse_csv(std::istream& in, Schema schema, std::string source) {
  RawTable table;
  table.source = std::move(source);

  std::string line;
  std::vector<std::string> cells;
  std::size_t line_no = 0;
  std::vector<std::string> names;

  auto next_record = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!trim(line).empty()) {
        split_record(line, cells);
        return true;
      }
    }
    return false;
  };

  if (schema == Schema::Kdd) {
    names = kdd_column_names();
  } else {
    if (!next_record()) fail(ErrorKind::Parse, table.source + ": empty file (missing header row)");
    for (auto& c : cells) names.emplace_back(trim(c));
    if (names.size() < 2) fail(ErrorKind::Parse, table.source + ": header needs at least 2 columns");
    if (schema == Schema::MalMem) {
      if (names.size() != kMalMemColumns) {
        fail(ErrorKind::Parse, table.source + ": MalMem header has " + std::to_string(names.size()) +
                                   " columns, expected " + std::to_string(kMalMemColumns));
      }
      for (const char* required : {"Category", "Class"}) {
        if (std::find(names.begin(), names.end(), required) == names.end()) {
          fail(ErrorKind::Parse, table.source + ": MalMem header lacks column '" + required + "'");
        }
      }
    }
  }

  const auto kinds = kinds_for(schema, names);
  // Generic files decide numeric vs categorical after reading every cell.
  const bool defer_kinds = schema == Schema::Generic;
  table.columns.resize(names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    table.columns[j].name = names[j];
    table.columns[j].kind = defer_kinds && kinds[j] != ColumnKind::Label ? ColumnKind::Categorical : kinds[j];
  }

  while (next_record()) {
    if (cells.size() != names.size()) {
      fail(ErrorKind::Parse, table.source + ": row at line " + std::to_string(line_no) + " has " +
                                 std::to_string(cells.size()) + " cells, expected " +
                                 std::to_string(names.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      auto& col = table.columns[j];
      if (col.kind == ColumnKind::Numeric) {
        col.numeric.push_back(number_or_nan(cells[j]));
      } else {
        col.text.emplace_back(trim(cells[j]));
      }
    }
    ++table.n_rows;
  }
  if (table.n_rows == 0) fail(ErrorKind::Parse, table.source + ": file contains no data rows");

  if (defer_kinds) {
    for (auto& col : table.columns) {
      if (col.kind == ColumnKind::Label) continue;
      bool all_numeric = std::all_of(col.text.begin(), col.text.end(), [](const std::string& s) {
        auto t = trim(s);
        return t.empty() || parse_number(t).has_value() || t == "?";
      });
      if (all_numeric) {
        col.kind = ColumnKind::Numeric;
        col.numeric.reserve(col.text.size());
        for (const auto& s : col.text) col.numeric.push_back(number_or_nan(s));
        col.text.clear();
        col.text.shrink_to_fit();
      }
    }
  }
  table.validate();
  return table;
}

RawTable load_csv(const std::filesystem::path& path, Schema schema) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Parse, "cannot open " + path.string());
  return parse_csv(in, schema, path.string());
}

// ---------------------------------------------------------------------------
// clean

namespace {

RawTable keep_rows(const RawTable& table, const std::vector<std::size_t>& rows) {
  RawTable out;
  out.source = table.source;
  out.n_rows = rows.size();
  out.columns.reserve(table.columns.size());
  for (const auto& col : table.columns) {
    RawColumn c;
    c.name = col.name;
    c.kind = col.kind;
    if (col.kind == ColumnKind::Numeric) {
      c.numeric.reserve(rows.size());
      for (auto r : rows) c.numeric.push_back(col.numeric[r]);
    } else {
      c.text.reserve(rows.size());
      for (auto r : rows) c.text.push_back(col.text[r]);
    }
    out.columns.push_back(std::move(c));
  }
  return out;
}

}  // namespace

RawTable clean(const RawTable& table) {
  std::vector<std::size_t> finite_rows;
  finite_rows.reserve(table.n_rows);
  for (std::size_t r = 0; r < table.n_rows; ++r) {
    bool ok = true;
    for (const auto& col : table.columns) {
      if (col.kind == ColumnKind::Numeric && !std::isfinite(col.numeric[r])) {
        ok = false;
        break;
      }
    }
    if (ok) finite_rows.push_back(r);
  }

  // Rows compare byte-exact: numeric cells by bit pattern, text cells by value.
  auto row_hash = [&](std::size_t r) {
    std::size_t h = 1469598103934665603ULL;
    for (const auto& col : table.columns) {
      std::size_t v = col.kind == ColumnKind::Numeric
                          ? std::hash<std::uint64_t>{}(std::bit_cast<std::uint64_t>(col.numeric[r]))
                          : std::hash<std::string>{}(col.text[r]);
      h = (h ^ v) * 1099511628211ULL;
    }
    return h;
  };
  auto row_equal = [&](std::size_t a, std::size_t b) {
    for (const auto& col : table.columns) {
      if (col.kind == ColumnKind::Numeric) {
        if (std::bit_cast<std::uint64_t>(col.numeric[a]) != std::bit_cast<std::uint64_t>(col.numeric[b]))
          return false;
      } else if (col.text[a] != col.text[b]) {
        return false;
      }
    }
    return true;
  };
  std::unordered_set<std::size_t, decltype(row_hash), decltype(row_equal)> seen(
      finite_rows.size() * 2 + 1, row_hash, row_equal);

  std::vector<std::size_t> keep;
  keep.reserve(finite_rows.size());
  for (auto r : finite_rows) {
    if (seen.insert(r).second) keep.push_back(r);
  }
  if (keep.empty()) fail(ErrorKind::EmptyData, table.source + ": every row was removed by cleaning");
  if (keep.size() == table.n_rows) return table;
  return keep_rows(table, keep);
}

// ---------------------------------------------------------------------------
// labels

std::string map_subcategory(std::string_view outcome) {
  static const std::unordered_map<std::string_view, std::string_view> table = {
      {"back", "dos"},         {"land", "dos"},          {"neptune", "dos"},
      {"pod", "dos"},          {"smurf", "dos"},         {"teardrop", "dos"},
      {"buffer_overflow", "u2r"}, {"loadmodule", "u2r"}, {"perl", "u2r"},
      {"rootkit", "u2r"},      {"ftp_write", "r2l"},     {"guess_passwd", "r2l"},
      {"imap", "r2l"},         {"multihop", "r2l"},      {"phf", "r2l"},
      {"spy", "r2l"},          {"warezclient", "r2l"},   {"warezmaster", "r2l"},
      {"ipsweep", "probe"},    {"nmap", "probe"},        {"portsweep", "probe"},
      {"satan", "probe"},      {"normal", "normal"},
  };
  auto key = trim(outcome);
  if (!key.empty() && key.back() == '.') key.remove_suffix(1);
  auto it = table.find(key);
  if (it == table.end()) fail(ErrorKind::Mapping, "unknown KDD subcategory '" + std::string(key) + "'");
  return std::string(it->second);
}

LabelMap LabelMap::lexicographic(std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  LabelMap map;
  for (std::size_t i = 0; i < names.size(); ++i) map.codes_.emplace(names[i], static_cast<int>(i));
  map.names_ = std::move(names);
  return map;
}

int LabelMap::code(std::string_view name) const {
  auto it = codes_.find(name);
  if (it == codes_.end()) fail(ErrorKind::Mapping, "category '" + std::string(name) + "' is not in the label map");
  return it->second;
}

const std::string& LabelMap::name(int code) const {
  if (code < 0 || static_cast<std::size_t>(code) >= names_.size()) {
    fail(ErrorKind::Mapping, "label code " + std::to_string(code) + " is out of range");
  }
  return names_[static_cast<std::size_t>(code)];
}

std::vector<int> encode_labels(std::span<const std::string> categories, const LabelMap& map) {
  std::vector<int> out;
  out.reserve(categories.size());
  for (const auto& c : categories) out.push_back(map.code(c));
  return out;
}

EncodedTable encode_categoricals(const RawTable& table) {
  EncodedTable out{table, {}};
  for (auto& col : out.table.columns) {
    if (col.kind != ColumnKind::Categorical) continue;
    auto codes = LabelMap::lexicographic(col.text);
    col.numeric.reserve(col.text.size());
    for (const auto& v : col.text) col.numeric.push_back(codes.code(v));
    col.text.clear();
    col.text.shrink_to_fit();
    col.kind = ColumnKind::Numeric;
    out.maps.push_back({col.name, std::move(codes)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// scaling

Standardized standardize(const Matrix& x) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  ColumnStats stats;
  stats.mean.assign(d, 0.0);
  stats.std.assign(d, 0.0);
  stats.min.assign(d, std::numeric_limits<double>::infinity());
  stats.max.assign(d, -std::numeric_limits<double>::infinity());
  if (n == 0) return {x, stats};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      double v = x(r, j);
      stats.mean[j] += v;
      stats.min[j] = std::min(stats.min[j], v);
      stats.max[j] = std::max(stats.max[j], v);
    }
  }
  for (auto& m : stats.mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      double dv = x(r, j) - stats.mean[j];
      stats.std[j] += dv * dv;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    // Constant columns get std exactly 0 so the guard below triggers.
    stats.std[j] = stats.min[j] == stats.max[j] ? 0.0 : std::sqrt(stats.std[j] / static_cast<double>(n));
  }
  return {apply_stats(x, stats), std::move(stats)};
}

Matrix apply_stats(const Matrix& x, const ColumnStats& stats) {
  const std::size_t d = x.cols();
  if (stats.mean.size() != d || stats.std.size() != d) {
    fail(ErrorKind::Shape, "stats describe " + std::to_string(stats.mean.size()) + " columns but matrix has " +
                               std::to_string(d));
  }
  Matrix out(x.rows(), d);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      out(r, j) = stats.std[j] > 0.0 ? (x(r, j) - stats.mean[j]) / stats.std[j] : 0.0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(Matrix x, std::vector<int> y, std::vector<std::string> feature_names,
                 std::vector<std::string> class_names, std::optional<ColumnStats> stats)
    : x_(std::move(x)),
      y_(std::move(y)),
      feature_names_(std::move(feature_names)),
      class_names_(std::move(class_names)),
      stats_(std::move(stats)) {
  if (x_.rows() == 0 || x_.cols() == 0) fail(ErrorKind::EmptyData, "dataset must have rows and features");
  if (y_.size() != x_.rows()) fail(ErrorKind::Shape, "label count does not match row count");
  if (feature_names_.size() != x_.cols()) fail(ErrorKind::Shape, "feature name count does not match width");
  if (class_names_.empty()) fail(ErrorKind::Shape, "dataset needs at least one class");
  for (double v : x_.data()) {
    if (!std::isfinite(v)) fail(ErrorKind::Parse, "dataset contains a non-finite cell");
  }
  const int k = static_cast<int>(class_names_.size());
  for (int label : y_) {
    if (label < 0 || label >= k) fail(ErrorKind::Mapping, "label " + std::to_string(label) + " out of range");
  }
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(n_classes(), 0);
  for (int label : y_) ++counts[static_cast<std::size_t>(label)];
  return counts;
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
  std::vector<int> y;
  y.reserve(rows.size());
  for (auto r : rows) y.push_back(y_[r]);
  return Dataset(x_.select_rows(rows), std::move(y), feature_names_, class_names_, stats_);
}

Dataset Dataset::select_features(std::span<const std::size_t> features) const {
  std::vector<std::string> names;
  std::optional<ColumnStats> stats;
  if (stats_) stats.emplace();
  for (auto f : features) {
    if (f >= n_features()) fail(ErrorKind::Shape, "feature index out of range");
    names.push_back(feature_names_[f]);
    if (stats_) {
      stats->mean.push_back(stats_->mean[f]);
      stats->std.push_back(stats_->std[f]);
      stats->min.push_back(stats_->min[f]);
      stats->max.push_back(stats_->max[f]);
    }
  }
  return Dataset(x_.select_cols(features), y_, std::move(names), class_names_, std::move(stats));
}

std::string Dataset::content_hash() const {
  std::string buf;
  const std::uint64_t shape[2] = {x_.rows(), x_.cols()};
  buf.append(reinterpret_cast<const char*>(shape), sizeof(shape));
  buf.append(reinterpret_cast<const char*>(x_.data().data()), x_.data().size() * sizeof(double));
  buf.append(reinterpret_cast<const char*>(y_.data()), y_.size() * sizeof(int));
  for (const auto& c : class_names_) buf.append(c).push_back('\n');
  return sha256_hex(buf);
}

// ---------------------------------------------------------------------------
// prepare

namespace {

std::string kdd_display_name(const std::string& category) {
  if (category == "dos") return "DoS";
  if (category == "normal") return "Normal";
  if (category == "probe") return "Probe";
  if (category == "r2l") return "R2L";
  if (category == "u2r") return "U2R";
  fail(ErrorKind::Mapping, "unknown KDD category '" + category + "'");
}

}  // namespace

Prepared prepare(const RawTable& table, Schema schema, const PrepareOptions& options) {
  RawTable cleaned = clean(table);
  const std::size_t removed = table.n_rows - cleaned.n_rows;
  if (removed > 0) spdlog::info("clean: removed {} of {} rows", removed, table.n_rows);
  EncodedTable encoded = encode_categoricals(cleaned);
  const RawTable& t = encoded.table;

  std::vector<std::string> categories;
  LabelMap map;
  switch (schema) {
    case Schema::Kdd: {
      const auto& outcome = t.column("outcome").text;
      categories.reserve(outcome.size());
      for (const auto& o : outcome) {
        auto cat = map_subcategory(o);
        if (options.task == Task::Binary) {
          categories.push_back(cat == "normal" ? "Normal" : "Attack");
        } else {
          categories.push_back(kdd_display_name(cat));
        }
      }
      map = options.task == Task::Binary ? LabelMap::lexicographic({"Attack", "Normal"})
                                         : LabelMap::lexicographic({"DoS", "Normal", "Probe", "R2L", "U2R"});
      break;
    }
    case Schema::MalMem: {
      if (options.task != Task::Binary) fail(ErrorKind::Config, "dataset.task: MalMem supports only binary");
      categories = t.column("Class").text;
      map = LabelMap::lexicographic(categories);
      break;
    }
    case Schema::Generic: {
      const RawColumn* label = nullptr;
      for (const auto& c : t.columns) {
        if (c.kind == ColumnKind::Label) label = &c;
      }
      if (!label) fail(ErrorKind::Internal, "generic table has no label column");
      categories = label->text;
      map = LabelMap::lexicographic(categories);
      if (options.task == Task::Binary && map.size() != 2) {
        fail(ErrorKind::Config, "dataset.task: binary task needs exactly 2 classes, found " +
                                    std::to_string(map.size()));
      }
      break;
    }
  }
  auto y = encode_labels(categories, map);

  std::vector<const RawColumn*> features;
  for (const auto& c : t.columns) {
    if (c.kind == ColumnKind::Numeric) features.push_back(&c);
  }
  if (features.empty()) fail(ErrorKind::EmptyData, "no feature columns remain after encoding");

  Matrix x(t.n_rows, features.size());
  std::vector<std::string> names;
  for (std::size_t j = 0; j < features.size(); ++j) {
    names.push_back(features[j]->name);
    for (std::size_t r = 0; r < t.n_rows; ++r) x(r, j) = features[j]->numeric[r];
  }

  std::optional<ColumnStats> stats;
  if (options.scale) {
    auto s = standardize(x);
    x = std::move(s.x);
    stats = std::move(s.stats);
  }
  return Prepared{Dataset(std::move(x), std::move(y), std::move(names), map.names(), std::move(stats)),
                  std::move(encoded.maps), table.n_rows, cleaned.n_rows};
}

Dataset sample_rows(const Dataset& data, std::size_t n, std::uint64_t seed) {
  if (n == 0) fail(ErrorKind::Argument, "sample size must be positive");
  if (n >= data.n_rows()) return data;
  const auto counts = data.class_counts();
  const std::size_t total = data.n_rows();

  // Largest-remainder apportionment of n across classes.
  std::vector<std::size_t> quota(counts.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    double exact = static_cast<double>(n) * static_cast<double>(counts[c]) / static_cast<double>(total);
    quota[c] = static_cast<std::size_t>(exact);
    assigned += quota[c];
    remainders.emplace_back(-(exact - static_cast<double>(quota[c])), c);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++quota[remainders[i % remainders.size()].second];

  std::vector<std::vector<std::size_t>> by_class(counts.size());
  for (std::size_t r = 0; r < total; ++r) by_class[static_cast<std::size_t>(data.y()[r])].push_back(r);
  std::vector<std::size_t> rows;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    Rng rng(mix_seed(seed, c));
    shuffle(by_class[c], rng);
    auto take = std::min(quota[c], by_class[c].size());
    rows.insert(rows.end(), by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(rows.begin(), rows.end());
  return data.select_rows(rows);
}

// ---------------------------------------------------------------------------
// prepared-dataset files

namespace {

constexpr char kMagic[8] = {'N', 'I', 'D', 'S', 'D', 'A', 'T', '1'};

std::filesystem::path bin_path(const std::filesystem::path& stem) {
  auto p = stem;
  p += ".bin";
  return p;
}

std::filesystem::path json_path(const std::filesystem::path& stem) {
  auto p = stem;
  p += ".json";
  return p;
}

json stats_to_json(const ColumnStats& s) {
  return json{{"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"max", s.max}};
}

ColumnStats stats_from_json(const json& j) {
  return ColumnStats{j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>(),
                     j.at("min").get<std::vector<double>>(), j.at("max").get<std::vector<double>>()};
}

}  // namespace

bool dataset_exists(const std::filesystem::path& stem) {
  return std::filesystem::exists(bin_path(stem)) && std::filesystem::exists(json_path(stem));
}

void write_dataset(const std::filesystem::path& stem, const Dataset& data,
                   std::span<const CategoricalCodes> categorical_maps) {
  {
    std::ofstream out(bin_path(stem), std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Stage, "cannot write " + bin_path(stem).string());
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t shape[2] = {data.n_rows(), data.n_features()};
    out.write(reinterpret_cast<const char*>(shape), sizeof(shape));
    out.write(reinterpret_cast<const char*>(data.x().data().data()),
              static_cast<std::streamsize>(data.x().data().size() * sizeof(double)));
    std::vector<std::int32_t> labels(data.y().begin(), data.y().end());
    out.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size() * sizeof(std::int32_t)));
  }

  json features = json::array();
  std::unordered_set<std::string> encoded;
  for (const auto& m : categorical_maps) encoded.insert(m.column);
  for (const auto& name : data.feature_names()) {
    features.push_back({{"name", name}, {"kind", encoded.count(name) ? "categorical" : "numeric"}});
  }
  json label_map = json::object();
  for (std::size_t c = 0; c < data.n_classes(); ++c) label_map[data.class_names()[c]] = c;
  json cat_maps = json::array();
  for (const auto& m : categorical_maps) cat_maps.push_back({{"column", m.column}, {"values", m.codes.names()}});

  json sidecar = {
      {"format", "nids.dataset"},
      {"version", 1},
      {"data_file", bin_path(stem).filename().string()},
      {"rows", data.n_rows()},
      {"features", features},
      {"classes", data.class_names()},
      {"label_map", label_map},
      {"class_counts", data.class_counts()},
      {"stats", data.stats() ? stats_to_json(*data.stats()) : json(nullptr)},
      {"categorical_maps", cat_maps},
      {"content_hash", data.content_hash()},
  };
  std::ofstream out(json_path(stem), std::ios::trunc);
  if (!out) fail(ErrorKind::Stage, "cannot write " + json_path(stem).string());
  out << sidecar.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& stem, DatasetFileInfo* info) {
  if (!dataset_exists(stem)) fail(ErrorKind::Ordering, "prepared dataset " + stem.string() + " not found");
  json sidecar;
  {
    std::ifstream in(json_path(stem));
    try {
      sidecar = json::parse(in);
    } catch (const json::exception& e) {
      fail(ErrorKind::Parse, json_path(stem).string() + ": " + e.what());
    }
  }
  std::ifstream in(bin_path(stem), std::ios::binary);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorKind::Parse, bin_path(stem).string() + ": not a prepared dataset file");
  }
  std::uint64_t shape[2];
  in.read(reinterpret_cast<char*>(shape), sizeof(shape));
  std::vector<double> cells(shape[0] * shape[1]);
  in.read(reinterpret_cast<char*>(cells.data()), static_cast<std::streamsize>(cells.size() * sizeof(double)));
  std::vector<std::int32_t> labels(shape[0]);
  in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(labels.size() * sizeof(std::int32_t)));
  if (!in) fail(ErrorKind::Parse, bin_path(stem).string() + ": truncated file");

  std::vector<std::string> names;
  for (const auto& f : sidecar.at("features")) names.push_back(f.at("name").get<std::string>());
  std::optional<ColumnStats> stats;
  if (!sidecar.at("stats").is_null()) stats = stats_from_json(sidecar.at("stats"));
  Dataset data(Matrix(shape[0], shape[1], std::move(cells)), std::vector<int>(labels.begin(), labels.end()),
               std::move(names), sidecar.at("classes").get<std::vector<std::string>>(), std::move(stats));

  const auto expected = sidecar.at("content_hash").get<std::string>();
  if (data.content_hash() != expected) {
    fail(ErrorKind::Parse, stem.string() + ": content hash mismatch between data file and sidecar");
  }
  if (info) {
    info->content_hash = expected;
    info->categorical_maps.clear();
    for (const auto& m : sidecar.at("categorical_maps")) {
      info->categorical_maps.push_back(
          {m.at("column").get<std::string>(), LabelMap::lexicographic(m.at("values").get<std::vector<std::string>>())});
    }
  }
  return data;
}

}  // namespace nids::ingest
