#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "nids/ingest.hpp"
#include "nids/random.hpp"

using namespace nids;
using namespace nids::ingest;

namespace {

const char* kKddRow =
    "0,tcp,http,SF,181,5450,0,0,0,0,0,1,0,0,0,0,0,0,0,0,0,0,8,8,0.00,0.00,0.00,0.00,1.00,0.00,0.00,9,9,"
    "1.00,0.00,0.11,0.00,0.00,0.00,0.00,0.00,normal.";

std::string kdd_row(const std::string& protocol, int src_bytes, const std::string& outcome) {
  return "0," + protocol + ",http,SF," + std::to_string(src_bytes) +
         ",5450,0,0,0,0,0,1,0,0,0,0,0,0,0,0,0,0,8,8,0.00,0.00,0.00,0.00,1.00,0.00,0.00,9,9,"
         "1.00,0.00,0.11,0.00,0.00,0.00,0.00,0.00," +
         outcome + ".";
}

RawTable parse(const std::string& text, Schema schema) {
  std::istringstream in(text);
  return parse_csv(in, schema);
}

ErrorKind error_kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected nids::Error");
  return ErrorKind::Internal;
}

}  // namespace

TEST_CASE("KDD rows parse with schema kinds") {
  auto t = parse(std::string(kKddRow) + "\n" + kdd_row("udp", 10, "smurf") + "\n", Schema::Kdd);
  CHECK(t.n_rows == 2);
  REQUIRE(t.columns.size() == 42);
  CHECK(t.columns[1].kind == ColumnKind::Categorical);
  CHECK(t.columns[2].kind == ColumnKind::Categorical);
  CHECK(t.columns[3].kind == ColumnKind::Categorical);
  CHECK(t.columns[0].kind == ColumnKind::Numeric);
  CHECK(t.columns[41].kind == ColumnKind::Label);
  CHECK(t.columns[41].text[1] == "smurf.");
  CHECK(t.columns[4].numeric[0] == 181.0);
}

TEST_CASE("malformed input is rejected") {
  CHECK(error_kind_of([] { parse("", Schema::Kdd); }) == ErrorKind::Parse);
  CHECK(error_kind_of([] { parse("a,b\n", Schema::Generic); }) == ErrorKind::Parse);
  CHECK(error_kind_of([] { parse_schema("pcap"); }) == ErrorKind::Config);

  try {
    parse(std::string(kKddRow) + "\n1,2,3\n", Schema::Kdd);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  // MalMem requires 57 header columns including Category and Class.
  CHECK(error_kind_of([] { parse("Category,x,Class\nA,1,Benign\n", Schema::MalMem); }) == ErrorKind::Parse);
}

TEST_CASE("MalMem header assigns label kinds") {
  std::string header = "Category";
  std::string row = "Benign";
  for (int i = 0; i < 55; ++i) {
    header += ",f" + std::to_string(i);
    row += "," + std::to_string(i);
  }
  header += ",Class\n";
  auto t = parse(header + row + ",Benign\n" + "Ransomware-x" + row.substr(6) + ",Malicious\n", Schema::MalMem);
  CHECK(t.n_rows == 2);
  CHECK(t.column("Category").kind == ColumnKind::Label);
  CHECK(t.column("Class").kind == ColumnKind::Label);
  CHECK(t.column("f3").kind == ColumnKind::Numeric);

  auto p = prepare(t, Schema::MalMem, {Task::Binary, false});
  CHECK(p.data.n_features() == 55);
  CHECK(p.data.class_names() == std::vector<std::string>{"Benign", "Malicious"});
  CHECK(p.data.y() == std::vector<int>{0, 1});
  CHECK(error_kind_of([&] { prepare(t, Schema::MalMem, {Task::Multilabel, false}); }) == ErrorKind::Config);
}

TEST_CASE("generic schema infers categorical columns and handles quotes") {
  auto t = parse("a,b,label\n1,\"x,y\",pos\n2,z,neg\n", Schema::Generic);
  CHECK(t.column("a").kind == ColumnKind::Numeric);
  CHECK(t.column("b").kind == ColumnKind::Categorical);
  CHECK(t.column("b").text[0] == "x,y");
  CHECK(t.column("label").kind == ColumnKind::Label);
}

TEST_CASE("clean drops non-finite and duplicate rows and is idempotent") {
  auto t = parse("a,b,label\n1,2,x\nnan,2,x\n1,2,x\n3,inf,y\n4,5,y\n1,2,y\n", Schema::Generic);
  auto c = clean(t);
  CHECK(c.n_rows == 3);
  CHECK(c.column("a").numeric == std::vector<double>{1, 4, 1});
  CHECK(c.column("label").text == std::vector<std::string>{"x", "y", "y"});

  auto again = clean(c);
  CHECK(again.n_rows == c.n_rows);
  CHECK(again.column("a").numeric == c.column("a").numeric);
  CHECK(again.column("label").text == c.column("label").text);

  CHECK(error_kind_of([] { clean(parse("a,label\nnan,x\n", Schema::Generic)); }) == ErrorKind::EmptyData);
}

TEST_CASE("subcategory mapping covers the 23 KDD outcomes") {
  CHECK(map_subcategory("smurf") == "dos");
  CHECK(map_subcategory("smurf.") == "dos");
  CHECK(map_subcategory("rootkit") == "u2r");
  CHECK(map_subcategory("normal") == "normal");

  const std::vector<std::pair<std::string, std::vector<std::string>>> groups = {
      {"dos", {"back", "land", "neptune", "pod", "smurf", "teardrop"}},
      {"u2r", {"buffer_overflow", "loadmodule", "perl", "rootkit"}},
      {"r2l", {"ftp_write", "guess_passwd", "imap", "multihop", "phf", "spy", "warezclient", "warezmaster"}},
      {"probe", {"ipsweep", "nmap", "portsweep", "satan"}},
      {"normal", {"normal"}},
  };
  std::size_t total = 0;
  for (const auto& [category, subs] : groups) {
    for (const auto& s : subs) CHECK(map_subcategory(s + ".") == category);
    total += subs.size();
  }
  CHECK(total == 23);

  try {
    map_subcategory("snmpgetattack.");
    FAIL("expected mapping error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Mapping);
    CHECK(std::string(e.what()).find("snmpgetattack") != std::string::npos);
  }
}

TEST_CASE("label encoding follows the lexicographic maps") {
  auto multi = LabelMap::lexicographic({"U2R", "Normal", "DoS", "R2L", "Probe"});
  std::vector<std::string> cats = {"DoS", "Normal", "Probe", "R2L", "U2R"};
  CHECK(encode_labels(cats, multi) == std::vector<int>{0, 1, 2, 3, 4});

  auto binary = LabelMap::lexicographic({"Normal", "Attack"});
  std::vector<std::string> bin = {"Attack", "Normal"};
  CHECK(encode_labels(bin, binary) == std::vector<int>{0, 1});

  CHECK(encode_labels(std::vector<std::string>{}, binary).empty());
  CHECK(error_kind_of([&] { encode_labels(std::vector<std::string>{"Other"}, binary); }) == ErrorKind::Mapping);

  // decode then encode is the identity
  for (int code = 0; code < 5; ++code) CHECK(multi.code(multi.name(code)) == code);
}

TEST_CASE("categorical encoding is lexicographic") {
  auto t = parse("proto,kind,n,label\ntcp,a,1,x\nudp,a,2,x\nicmp,a,3,y\ntcp,a,4,y\n", Schema::Generic);
  auto e = encode_categoricals(t);
  CHECK(e.table.column("proto").kind == ColumnKind::Numeric);
  CHECK(e.table.column("proto").numeric == std::vector<double>{1, 2, 0, 1});
  CHECK(e.table.column("kind").numeric == std::vector<double>{0, 0, 0, 0});
  REQUIRE(e.maps.size() == 2);
  CHECK(e.maps[0].codes.names() == std::vector<std::string>{"icmp", "tcp", "udp"});

  auto numeric = parse("n,label\n1,x\n2,y\n", Schema::Generic);
  auto same = encode_categoricals(numeric);
  CHECK(same.maps.empty());
  CHECK(same.table.column("n").numeric == numeric.column("n").numeric);
}

TEST_CASE("standardize examples") {
  auto s = standardize(Matrix(2, 1, std::vector<double>{0, 2}));
  CHECK(s.stats.mean[0] == 1.0);
  CHECK(s.stats.std[0] == 1.0);
  CHECK(s.x(0, 0) == -1.0);
  CHECK(s.x(1, 0) == 1.0);

  auto c = standardize(Matrix(3, 1, std::vector<double>{5, 5, 5}));
  CHECK(c.stats.std[0] == 0.0);
  CHECK(c.x.data() == std::vector<double>{0, 0, 0});

  // a cell equal to its column mean maps to zero
  auto m = standardize(Matrix(3, 1, std::vector<double>{1, 2, 3}));
  CHECK(m.x(1, 0) == 0.0);
}

TEST_CASE("standardized columns have zero mean and unit population std") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t n = 2 + uniform_index(rng, 200);
    std::size_t d = 1 + uniform_index(rng, 6);
    Matrix x(n, d);
    for (auto& v : x.data()) v = 1000.0 * standard_normal(rng) + 50.0;
    auto s = standardize(x);
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0, sq = 0;
      for (std::size_t r = 0; r < n; ++r) mean += s.x(r, j);
      mean /= static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r) sq += (s.x(r, j) - mean) * (s.x(r, j) - mean);
      CHECK(std::abs(mean) <= 1e-9);
      CHECK(std::abs(std::sqrt(sq / static_cast<double>(n)) - 1.0) <= 1e-9);
    }
    CHECK(apply_stats(x, s.stats) == s.x);
  }
}

TEST_CASE("apply_stats guards and shape checks") {
  Matrix x(2, 2, std::vector<double>{1, 2, 3, 4});
  ColumnStats identity{{0, 0}, {1, 1}, {0, 0}, {0, 0}};
  CHECK(apply_stats(x, identity) == x);
  ColumnStats zero{{0, 0}, {0, 1}, {0, 0}, {0, 0}};
  auto z = apply_stats(x, zero);
  CHECK(z(0, 0) == 0.0);
  CHECK(z(1, 0) == 0.0);
  CHECK(z(1, 1) == 4.0);
  ColumnStats narrow{{0}, {1}, {0}, {0}};
  CHECK(error_kind_of([&] { apply_stats(x, narrow); }) == ErrorKind::Shape);
}

TEST_CASE("prepare builds KDD labels for both tasks") {
  std::string text = kdd_row("tcp", 1, "normal") + "\n" + kdd_row("udp", 2, "smurf") + "\n" +
                     kdd_row("icmp", 3, "rootkit") + "\n" + kdd_row("tcp", 4, "satan") + "\n" +
                     kdd_row("tcp", 5, "phf") + "\n" + kdd_row("tcp", 5, "phf") + "\n";
  auto t = parse(text, Schema::Kdd);
  auto binary = prepare(t, Schema::Kdd, {Task::Binary, true});
  CHECK(binary.rows_loaded == 6);
  CHECK(binary.rows_after_clean == 5);
  CHECK(binary.data.n_features() == 41);
  CHECK(binary.data.class_names() == std::vector<std::string>{"Attack", "Normal"});
  CHECK(binary.data.y() == std::vector<int>{1, 0, 0, 0, 0});
  CHECK(binary.data.stats().has_value());

  auto multi = prepare(t, Schema::Kdd, {Task::Multilabel, false});
  CHECK(multi.data.class_names() == std::vector<std::string>{"DoS", "Normal", "Probe", "R2L", "U2R"});
  CHECK(multi.data.y() == std::vector<int>{1, 0, 4, 2, 3});
  // protocol_type codes: icmp 0, tcp 1, udp 2
  CHECK(multi.data.x()(1, 1) == 2.0);
  CHECK(multi.data.x()(2, 1) == 0.0);
}

TEST_CASE("dataset invariants are enforced") {
  CHECK(error_kind_of([] { Dataset(Matrix(1, 1, std::vector<double>{NAN}), {0}, {"a"}, {"x"}); }) == ErrorKind::Parse);
  CHECK(error_kind_of([] { Dataset(Matrix(1, 1), {2}, {"a"}, {"x", "y"}); }) == ErrorKind::Mapping);
  CHECK(error_kind_of([] { Dataset(Matrix(0, 1), {}, {"a"}, {"x"}); }) == ErrorKind::EmptyData);
}

TEST_CASE("stratified sampling keeps class proportions and order") {
  Matrix x(100, 1);
  std::vector<int> y(100);
  for (std::size_t i = 0; i < 100; ++i) {
    x(i, 0) = static_cast<double>(i);
    y[i] = i < 80 ? 0 : 1;
  }
  Dataset d(x, y, {"f"}, {"a", "b"});
  auto s = sample_rows(d, 50, 3);
  CHECK(s.n_rows() == 50);
  CHECK(s.class_counts() == std::vector<std::size_t>{40, 10});
  for (std::size_t i = 1; i < s.n_rows(); ++i) CHECK(s.x()(i - 1, 0) < s.x()(i, 0));
  CHECK(sample_rows(d, 50, 3).x() == s.x());
}

TEST_CASE("prepared dataset files round-trip and detect tampering") {
  auto dir = std::filesystem::temp_directory_path() / "nids_test_ingest";
  std::filesystem::create_directories(dir);
  Dataset d(Matrix(2, 2, std::vector<double>{0.5, -1, 3, 4}), {1, 0}, {"p", "q"}, {"a", "b"},
            ColumnStats{{1, 2}, {3, 4}, {0, 0}, {5, 5}});
  auto stem = dir / "prepared";
  LabelMap codes = LabelMap::lexicographic({"tcp", "udp"});
  std::vector<CategoricalCodes> maps = {{"p", codes}};
  write_dataset(stem, d, maps);
  DatasetFileInfo info;
  auto back = read_dataset(stem, &info);
  CHECK(back.x() == d.x());
  CHECK(back.y() == d.y());
  CHECK(back.feature_names() == d.feature_names());
  CHECK(back.stats()->std == d.stats()->std);
  CHECK(info.content_hash == d.content_hash());
  REQUIRE(info.categorical_maps.size() == 1);
  CHECK(info.categorical_maps[0].codes.names() == codes.names());

  {
    std::fstream f(std::filesystem::path(stem) += ".bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(24);
    double tampered = 9.0;
    f.write(reinterpret_cast<const char*>(&tampered), sizeof(tampered));
  }
  CHECK(error_kind_of([&] { read_dataset(stem); }) == ErrorKind::Parse);
  CHECK(error_kind_of([&] { read_dataset(dir / "missing"); }) == ErrorKind::Ordering);
  std::filesystem::remove_all(dir);
}
