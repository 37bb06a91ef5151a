#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ticl/data/table.hpp"

namespace ticl::data {

/// Header plus rows of raw cells from comma- or tab-delimited text.
struct DelimitedText {
  char delimiter = ',';
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Parses RFC-4180 style text (double-quoted fields, doubled quotes). The
/// delimiter is a tab if the header line contains one, a comma otherwise.
/// Throws DataError on ragged rows or a missing header.
DelimitedText parse_delimited(std::string_view text);
DelimitedText read_delimited(const std::filesystem::path& path);

/// Empty, "NA", "N/A", "?", "nan", "NaN", "null" (after trimming).
bool is_missing_token(std::string_view cell);
/// Finite number or nullopt.
std::optional<double> parse_number(std::string_view cell);

/// Numeric iff at least 99% of non-missing entries parse as finite numbers
/// and more than 10 distinct numbers occur; categorical otherwise.
ColumnKind infer_column_kind(std::span<const std::string> raw);

/// How to turn one delimited file into a Table.
struct TableSpec {
  std::string name;
  std::filesystem::path path;
  Domain domain = Domain::kOther;
  std::map<std::string, ColumnKind> kind_overrides;
  /// Default prediction target for evaluation (column name).
  std::optional<std::string> target;
};

Table table_from_text(const DelimitedText& text, const TableSpec& spec);
Table load_table(const TableSpec& spec);

/// Canonical delimited form: comma separated, header row, level strings for
/// categorical cells, shortest round-trip decimal for numbers, empty cells
/// for missing entries.
std::string format_table(const Table& table);
void write_table(const Table& table, const std::filesystem::path& path);

/// Spec that reloads `table` from `path` with every column kind pinned.
TableSpec pinned_spec(const Table& table, const std::filesystem::path& path);

}  // namespace ticl::data
