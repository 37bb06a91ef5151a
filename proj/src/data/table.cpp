#include "ticl/data/table.hpp"

#include <algorithm>
#include <array>

#include "ticl/core/errors.hpp"

namespace ticl::data {
namespace {

constexpr std::array<std::pair<Domain, std::string_view>, kDomainCount> kDomainNames{{
    {Domain::kFinancialDemographic, "financial-demographic"},
    {Domain::kMedicalHumanSensor, "medical-human-sensor"},
    {Domain::kIndustrialOperational, "industrial-operational"},
    {Domain::kHumanBehaviour, "human-behaviour"},
    {Domain::kPhysicsAstronomy, "physics-astronomy"},
    {Domain::kBiologyEcology, "biology-ecology"},
    {Domain::kVisionAudioText, "vision-audio-text"},
    {Domain::kOtherScience, "other-science"},
    {Domain::kDeterministicSimulated, "deterministic-simulated"},
    {Domain::kOther, "other"},
}};

constexpr std::array<Domain, kDomainCount> kDomains{
    Domain::kFinancialDemographic, Domain::kMedicalHumanSensor, Domain::kIndustrialOperational,
    Domain::kHumanBehaviour,       Domain::kPhysicsAstronomy,   Domain::kBiologyEcology,
    Domain::kVisionAudioText,      Domain::kOtherScience,       Domain::kDeterministicSimulated,
    Domain::kOther,
};

}  // namespace

std::string_view domain_name(Domain domain) {
  for (const auto& [d, name] : kDomainNames) {
    if (d == domain) return name;
  }
  return "other";
}

Domain parse_domain(std::string_view name) {
  for (const auto& [d, n] : kDomainNames) {
    if (n == name) return d;
  }
  throw DataError("unknown domain tag '" + std::string(name) + "'");
}

std::span<const Domain> all_domains() { return kDomains; }

std::string_view kind_name(ColumnKind kind) {
  return kind == ColumnKind::kNumeric ? "numeric" : "categorical";
}

ColumnKind parse_kind(std::string_view name) {
  if (name == "numeric") return ColumnKind::kNumeric;
  if (name == "categorical") return ColumnKind::kCategorical;
  throw DataError("unknown column kind '" + std::string(name) + "'");
}

std::size_t Column::missing_count() const {
  return static_cast<std::size_t>(std::count(missing.begin(), missing.end(), std::uint8_t{1}));
}

Table::Table(std::string name, Domain domain, std::vector<Column> columns)
    : name_(std::move(name)), domain_(domain), columns_(std::move(columns)) {
  if (columns_.empty()) throw DataError("table '" + name_ + "' has no columns");
  rows_ = columns_.front().size();
  if (rows_ == 0) throw DataError("table '" + name_ + "' has no rows");
  for (const auto& col : columns_) {
    if (col.values.size() != rows_ || col.missing.size() != rows_) {
      throw DataError("table '" + name_ + "': column '" + col.name + "' has " +
                      std::to_string(col.values.size()) + " entries, expected " +
                      std::to_string(rows_));
    }
    for (std::size_t r = 0; r < rows_; ++r) {
      const double v = col.values[r];
      if (col.categorical()) {
        const double reserved = static_cast<double>(col.cardinality());
        const bool ok = col.is_missing(r) ? v == reserved
                                          : (v >= 0 && v < reserved && v == std::floor(v));
        if (!ok) {
          throw DataError("table '" + name_ + "': column '" + col.name + "' row " +
                          std::to_string(r) + " holds invalid code " + std::to_string(v));
        }
      } else if (col.is_missing(r) != std::isnan(v)) {
        throw DataError("table '" + name_ + "': column '" + col.name + "' row " +
                        std::to_string(r) + " missing mask disagrees with value");
      }
    }
  }
}

std::optional<std::size_t> Table::find_column(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t Table::column_index(std::string_view name) const {
  if (auto idx = find_column(name)) return *idx;
  throw DataError("table '" + name_ + "' has no column '" + std::string(name) + "'");
}

Table Table::select_columns(std::span<const std::size_t> indices) const {
  std::vector<Column> cols;
  cols.reserve(indices.size());
  for (const std::size_t i : indices) cols.push_back(column(i));
  return Table(name_, domain_, std::move(cols));
}

Table Table::select_rows(std::span<const std::size_t> indices) const {
  std::vector<Column> cols;
  cols.reserve(columns_.size());
  for (const auto& src : columns_) {
    Column col;
    col.name = src.name;
    col.kind = src.kind;
    col.levels = src.levels;
    col.values.reserve(indices.size());
    col.missing.reserve(indices.size());
    for (const std::size_t r : indices) {
      if (r >= rows_) throw DataError("row index " + std::to_string(r) + " out of range");
      col.values.push_back(src.values[r]);
      col.missing.push_back(src.missing[r]);
    }
    cols.push_back(std::move(col));
  }
  return Table(name_, domain_, std::move(cols));
}

Table Table::renamed(std::string name) const {
  Table copy = *this;
  copy.name_ = std::move(name);
  return copy;
}

std::size_t Table::numeric_count() const {
  return static_cast<std::size_t>(std::count_if(columns_.begin(), columns_.end(),
                                                [](const Column& c) { return !c.categorical(); }));
}

std::size_t Table::categorical_count() const { return columns_.size() - numeric_count(); }

double Table::missing_fraction() const {
  std::size_t missing = 0;
  for (const auto& c : columns_) missing += c.missing_count();
  return static_cast<double>(missing) / static_cast<double>(rows_ * columns_.size());
}

}  // namespace ticl::data
