#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "ticl/core/checksum.hpp"
#include "ticl/core/errors.hpp"
#include "ticl/data/io.hpp"
#include "ticl/data/manifest.hpp"
#include "ticl/data/reference.hpp"

using namespace ticl;
using namespace ticl::data;

namespace {

TableSpec spec_named(std::string name) {
  TableSpec spec;
  spec.name = std::move(name);
  spec.domain = Domain::kOther;
  return spec;
}

std::filesystem::path temp_path(const std::string& leaf) {
  return std::filesystem::temp_directory_path() / ("ticl_test_data_" + leaf);
}

}  // namespace

TEST_CASE("one empty cell is masked at exactly that cell") {
  const auto text = parse_delimited("a,b\n1,x\n,y\n3,x\n");
  const auto table = table_from_text(text, spec_named("toy"));
  CHECK(table.row_count() == 3);
  CHECK(table.column_count() == 2);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t r = 0; r < 3; ++r) {
      CHECK(table.column(c).is_missing(r) == (c == 0 && r == 1));
    }
  }
  CHECK(table.column(0).categorical());
  CHECK(table.column(0).values[1] == table.column(0).cardinality());
}

TEST_CASE("categorical codes follow first appearance") {
  const auto table = table_from_text(parse_delimited("c\na\nb\na\n"), spec_named("toy"));
  const auto& col = table.column(0);
  CHECK(col.categorical());
  CHECK(col.cardinality() == 2);
  CHECK(col.values == std::vector<double>{0, 1, 0});
  CHECK(col.levels == std::vector<std::string>{"a", "b"});
}

TEST_CASE("column kind inference rule") {
  std::vector<std::string> twenty;
  for (int i = 0; i < 20; ++i) twenty.push_back(std::to_string(i) + ".5");
  CHECK(infer_column_kind(twenty) == ColumnKind::kNumeric);
  CHECK(infer_column_kind(std::vector<std::string>{"0", "1", "0", "1"}) == ColumnKind::kCategorical);
  CHECK(infer_column_kind(std::vector<std::string>{"1", "x", "2"}) == ColumnKind::kCategorical);
  // Ten distinct numbers are still categorical; eleven are numeric.
  std::vector<std::string> ten, eleven;
  for (int i = 0; i < 10; ++i) ten.push_back(std::to_string(i));
  eleven = ten;
  eleven.push_back("10");
  CHECK(infer_column_kind(ten) == ColumnKind::kCategorical);
  CHECK(infer_column_kind(eleven) == ColumnKind::kNumeric);
  // One unparseable entry in 200 is tolerated (99% rule); three are not.
  std::vector<std::string> mostly(200);
  for (int i = 0; i < 200; ++i) mostly[i] = std::to_string(i);
  mostly[7] = "bad";
  CHECK(infer_column_kind(mostly) == ColumnKind::kNumeric);
  mostly[8] = "bad";
  mostly[9] = "bad";
  CHECK(infer_column_kind(mostly) == ColumnKind::kCategorical);
  CHECK_THROWS_AS(infer_column_kind(std::vector<std::string>{"", "NA", "?"}), DataError);
}

TEST_CASE("kind overrides") {
  TableSpec spec = spec_named("toy");
  spec.kind_overrides["a"] = ColumnKind::kNumeric;
  const auto table = table_from_text(parse_delimited("a,b\n0,1\n1,2\n0,3\n"), spec);
  CHECK(table.column(0).kind == ColumnKind::kNumeric);
  CHECK(table.column(1).kind == ColumnKind::kCategorical);
  spec.kind_overrides["nope"] = ColumnKind::kNumeric;
  CHECK_THROWS_AS(table_from_text(parse_delimited("a,b\n0,1\n"), spec), DataError);
}

TEST_CASE("load errors") {
  CHECK_THROWS_AS(parse_delimited("a,b\n1,2\n3\n"), DataError);
  CHECK_THROWS_AS(table_from_text(parse_delimited("a,b\n"), spec_named("empty")), DataError);
  TableSpec missing = spec_named("nofile");
  missing.path = temp_path("does_not_exist.csv");
  CHECK_THROWS_AS(load_table(missing), DataError);
  CHECK_THROWS_AS(parse_domain("astrology"), DataError);
}

TEST_CASE("quoted fields and tab delimiters") {
  const auto text = parse_delimited("name\tv\n\"x, \"\"y\"\"\"\t1\n");
  CHECK(text.delimiter == '\t');
  CHECK(text.rows[0][0] == "x, \"y\"");
  const auto csv = parse_delimited("a,b\r\n\"p\nq\",2\r\n");
  CHECK(csv.rows.size() == 1);
  CHECK(csv.rows[0][0] == "p\nq");
}

TEST_CASE("canonical write then reload preserves values, kinds and masks") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> rows_dist(1, 40), cols_dist(1, 6), cat(0, 4), coin(0, 9);
    std::normal_distribution<double> normal(0.0, 100.0);
    const int rows = rows_dist(gen), cols = cols_dist(gen);
    std::string text;
    for (int c = 0; c < cols; ++c) text += (c ? ",c" : "c") + std::to_string(c);
    text += '\n';
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        if (c) text += ',';
        if (coin(gen) == 0) continue;
        if (c % 2 == 0) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.17g", normal(gen));
          text += buf;
        } else {
          text += "lvl" + std::to_string(cat(gen));
        }
      }
      text += '\n';
    }
    // Columns that came out entirely missing cannot be typed; skip those draws.
    Table original;
    try {
      original = table_from_text(parse_delimited(text), spec_named("prop"));
    } catch (const DataError&) {
      continue;
    }
    const auto path = temp_path("roundtrip.csv");
    write_table(original, path);
    const Table reloaded = load_table(pinned_spec(original, path));
    REQUIRE(reloaded.column_count() == original.column_count());
    REQUIRE(reloaded.row_count() == original.row_count());
    for (std::size_t c = 0; c < original.column_count(); ++c) {
      const auto& a = original.column(c);
      const auto& b = reloaded.column(c);
      CHECK(a.kind == b.kind);
      CHECK(a.missing == b.missing);
      CHECK(a.levels == b.levels);
      for (std::size_t r = 0; r < a.size(); ++r) {
        if (!a.is_missing(r)) CHECK(a.values[r] == b.values[r]);
      }
    }
    std::filesystem::remove(path);
  }
}

TEST_CASE("table invariants are enforced") {
  Column a{"a", ColumnKind::kNumeric, {1.0, 2.0}, {0, 0}, {}};
  Column b{"b", ColumnKind::kNumeric, {1.0}, {0}, {}};
  CHECK_THROWS_AS(Table("t", Domain::kOther, {a, b}), DataError);
  Column bad_code{"c", ColumnKind::kCategorical, {0.0, 3.0}, {0, 0}, {"x", "y"}};
  CHECK_THROWS_AS(Table("t", Domain::kOther, {bad_code}), DataError);
  Column missing_code{"c", ColumnKind::kCategorical, {0.0, 2.0}, {0, 1}, {"x", "y"}};
  CHECK_NOTHROW(Table("t", Domain::kOther, {missing_code}));
}

TEST_CASE("bundled reference records") {
  const auto records = load_reference_records();
  std::size_t cc18 = 0, ctr23 = 0;
  for (const auto& r : records) {
    (r.benchmark == Benchmark::kCc18 ? cc18 : ctr23) += 1;
    if (r.benchmark == Benchmark::kCc18) {
      CHECK(r.score >= 0.0);
      CHECK(r.score <= 1.0);
    } else {
      CHECK(r.score <= 1.0);
    }
  }
  // One record per printed row of each appendix table.
  CHECK(cc18 == 83);
  CHECK(ctr23 == 83);

  const auto cc = reference_records(Benchmark::kCc18);
  CHECK(cc.front().dataset == "colleges");
  CHECK(cc.front().score == 0.916);
  CHECK(cc.front().instances == 7063);
  CHECK(cc.front().features == 45);
  CHECK(cc.front().domain == Domain::kOther);
  CHECK(cc.back().dataset == "analcatdata_supreme");
  CHECK(cc.back().score == 0.668);
  CHECK(cc.back().instances == 4052);
  CHECK(cc.back().features == 8);
  CHECK(cc.back().domain == Domain::kOther);

  const auto ctr = reference_records(Benchmark::kCtr23);
  CHECK(ctr.front().dataset == "colleges");
  CHECK(ctr.front().score == 0.694);
  CHECK(ctr.front().instances == 7063);
  CHECK(ctr.front().features == 45);
}

TEST_CASE("tampered reference file fails its checksum") {
  const auto dir = temp_path("refdir");
  std::filesystem::create_directories(dir / "reference");
  const auto src = default_data_dir() / "reference";
  std::filesystem::copy_file(src / "cc18_auc.csv", dir / "reference" / "cc18_auc.csv",
                             std::filesystem::copy_options::overwrite_existing);
  std::filesystem::copy_file(src / "ctr23_r2.csv", dir / "reference" / "ctr23_r2.csv",
                             std::filesystem::copy_options::overwrite_existing);
  CHECK(load_reference_records(dir).size() == 166);
  {
    std::ofstream out(dir / "reference" / "cc18_auc.csv", std::ios::app);
    out << "fake,0.5,1,1,other\n";
  }
  CHECK_THROWS_AS(load_reference_records(dir), ChecksumError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("bundled manifest loads every table") {
  const auto manifest = Manifest::load(default_data_dir() / "manifest.json");
  CHECK(manifest.entries().size() >= 10);
  for (const auto& entry : manifest.entries()) {
    CAPTURE(entry.name);
    const Table t = manifest.load_table(entry.name);
    CHECK(t.row_count() > 100);
    if (entry.target) CHECK(t.find_column(*entry.target).has_value());
  }
  CHECK_THROWS_AS(manifest.at("nonexistent"), ConfigError);
  CHECK_THROWS_AS(Manifest::parse(R"({"datasets":[{"name":"x","path":"p","domain":"bogus"}]})", "."),
                  ConfigError);
}
