#include "ticl/data/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ticl/core/errors.hpp"

namespace ticl::data {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string quote_if_needed(const std::string& cell) {
  if (cell.find_first_of(",\"\n\r\t") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

DelimitedText parse_delimited(std::string_view text) {
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
    text.remove_prefix(3);
  }
  DelimitedText out;
  const auto header_end = text.find('\n');
  const std::string_view header_line = text.substr(0, header_end);
  out.delimiter = header_line.find('\t') != std::string_view::npos ? '\t' : ',';

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string cell;
  bool in_quotes = false;
  bool any_content = false;
  std::size_t line = 1;
  auto end_record = [&] {
    record.push_back(std::move(cell));
    cell.clear();
    const bool blank = record.size() == 1 && trim(record[0]).empty();
    if (!blank) records.push_back(std::move(record));
    record.clear();
    any_content = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        cell += c;
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
      any_content = true;
    } else if (c == out.delimiter) {
      record.push_back(std::move(cell));
      cell.clear();
      any_content = true;
    } else if (c == '\n') {
      end_record();
      ++line;
    } else if (c != '\r') {
      cell += c;
      any_content = true;
    }
  }
  if (in_quotes) throw DataError("unterminated quoted field near line " + std::to_string(line));
  if (any_content || !cell.empty() || !record.empty()) end_record();

  if (records.empty()) throw DataError("delimited text has no header row");
  out.header = std::move(records.front());
  for (auto& h : out.header) h = std::string(trim(h));
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != out.header.size()) {
      throw DataError("ragged row " + std::to_string(r) + ": " + std::to_string(records[r].size()) +
                      " fields, header has " + std::to_string(out.header.size()));
    }
    out.rows.push_back(std::move(records[r]));
  }
  return out;
}

DelimitedText read_delimited(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_delimited(buf.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

bool is_missing_token(std::string_view cell) {
  const auto t = trim(cell);
  return t.empty() || t == "NA" || t == "N/A" || t == "?" || t == "nan" || t == "NaN" ||
         t == "null" || t == "NULL";
}

std::optional<double> parse_number(std::string_view cell) {
  auto t = trim(cell);
  if (!t.empty() && t.front() == '+') t.remove_prefix(1);
  if (t.empty()) return std::nullopt;
  double v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

ColumnKind infer_column_kind(std::span<const std::string> raw) {
  std::size_t present = 0, numeric = 0;
  std::set<double> distinct;
  for (const auto& cell : raw) {
    if (is_missing_token(cell)) continue;
    ++present;
    if (auto v = parse_number(cell)) {
      ++numeric;
      if (distinct.size() <= 10) distinct.insert(*v);
    }
  }
  if (present == 0) throw DataError("cannot infer kind: all entries missing");
  const bool parseable = static_cast<double>(numeric) >= 0.99 * static_cast<double>(present);
  return parseable && distinct.size() > 10 ? ColumnKind::kNumeric : ColumnKind::kCategorical;
}

Table table_from_text(const DelimitedText& text, const TableSpec& spec) {
  if (text.rows.empty()) throw DataError("table '" + spec.name + "' is empty");
  for (const auto& [col, kind] : spec.kind_overrides) {
    if (std::find(text.header.begin(), text.header.end(), col) == text.header.end()) {
      throw DataError("table '" + spec.name + "': kind override for unknown column '" + col + "'");
    }
  }
  std::vector<Column> columns;
  columns.reserve(text.header.size());
  std::vector<std::string> raw(text.rows.size());
  for (std::size_t c = 0; c < text.header.size(); ++c) {
    for (std::size_t r = 0; r < text.rows.size(); ++r) raw[r] = text.rows[r][c];
    Column col;
    col.name = text.header[c];
    const auto override_it = spec.kind_overrides.find(col.name);
    if (override_it != spec.kind_overrides.end()) {
      col.kind = override_it->second;
    } else {
      try {
        col.kind = infer_column_kind(raw);
      } catch (const DataError&) {
        throw DataError("table '" + spec.name + "': column '" + col.name + "' is entirely missing");
      }
    }
    col.values.resize(raw.size());
    col.missing.assign(raw.size(), 0);
    if (col.kind == ColumnKind::kNumeric) {
      for (std::size_t r = 0; r < raw.size(); ++r) {
        const auto v = is_missing_token(raw[r]) ? std::nullopt : parse_number(raw[r]);
        col.values[r] = v ? *v : std::nan("");
        col.missing[r] = v ? 0 : 1;
      }
    } else {
      std::unordered_map<std::string, std::size_t> codes;
      std::vector<std::size_t> pending;
      for (std::size_t r = 0; r < raw.size(); ++r) {
        if (is_missing_token(raw[r])) {
          col.missing[r] = 1;
          pending.push_back(r);
          continue;
        }
        const std::string level(trim(raw[r]));
        auto [it, inserted] = codes.emplace(level, col.levels.size());
        if (inserted) col.levels.push_back(level);
        col.values[r] = static_cast<double>(it->second);
      }
      for (const std::size_t r : pending) col.values[r] = static_cast<double>(col.levels.size());
    }
    columns.push_back(std::move(col));
  }
  return Table(spec.name, spec.domain, std::move(columns));
}

Table load_table(const TableSpec& spec) {
  try {
    return table_from_text(read_delimited(spec.path), spec);
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()));
  }
}

std::string format_table(const Table& table) {
  std::string out;
  for (std::size_t c = 0; c < table.column_count(); ++c) {
    if (c) out += ',';
    out += quote_if_needed(table.column(c).name);
  }
  out += '\n';
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    for (std::size_t c = 0; c < table.column_count(); ++c) {
      if (c) out += ',';
      const Column& col = table.column(c);
      if (col.is_missing(r)) continue;
      if (col.categorical()) {
        out += quote_if_needed(col.levels[static_cast<std::size_t>(col.values[r])]);
      } else {
        out += format_number(col.values[r]);
      }
    }
    out += '\n';
  }
  return out;
}

void write_table(const Table& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << format_table(table);
}

TableSpec pinned_spec(const Table& table, const std::filesystem::path& path) {
  TableSpec spec;
  spec.name = table.name();
  spec.path = path;
  spec.domain = table.domain();
  for (const auto& col : table.columns()) spec.kind_overrides[col.name] = col.kind;
  return spec;
}

}  // namespace ticl::data
