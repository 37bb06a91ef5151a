#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ticl::data {

/// Closed set of dataset domains used to group pre-training and evaluation
/// tables.
enum class Domain {
  kFinancialDemographic,
  kMedicalHumanSensor,
  kIndustrialOperational,
  kHumanBehaviour,
  kPhysicsAstronomy,
  kBiologyEcology,
  kVisionAudioText,
  kOtherScience,
  kDeterministicSimulated,
  kOther,
};

inline constexpr std::size_t kDomainCount = 10;

std::string_view domain_name(Domain domain);
/// Throws DataError for names outside the closed set.
Domain parse_domain(std::string_view name);
std::span<const Domain> all_domains();

enum class ColumnKind { kNumeric, kCategorical };

std::string_view kind_name(ColumnKind kind);
ColumnKind parse_kind(std::string_view name);

/// One typed column. Numeric values are stored as-is with NaN for missing
/// entries; categorical values hold ordinal codes in [0, cardinality) and the
/// reserved code `cardinality` for missing entries. The mask is authoritative.
struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  std::vector<double> values;
  std::vector<std::uint8_t> missing;
  /// Categorical only: level strings indexed by code.
  std::vector<std::string> levels;

  std::size_t size() const { return values.size(); }
  std::size_t cardinality() const { return levels.size(); }
  bool is_missing(std::size_t row) const { return missing[row] != 0; }
  std::size_t missing_count() const;
  bool categorical() const { return kind == ColumnKind::kCategorical; }
};

/// Immutable column-typed dataset.
class Table {
 public:
  Table() = default;
  /// Validates the column invariants; throws DataError on violation.
  Table(std::string name, Domain domain, std::vector<Column> columns);

  const std::string& name() const { return name_; }
  Domain domain() const { return domain_; }
  std::size_t row_count() const { return rows_; }
  std::size_t column_count() const { return columns_.size(); }
  const std::vector<Column>& columns() const { return columns_; }
  const Column& column(std::size_t index) const { return columns_.at(index); }
  std::optional<std::size_t> find_column(std::string_view name) const;
  /// Index of `name`; throws DataError when absent.
  std::size_t column_index(std::string_view name) const;

  /// Table restricted to the given columns (in the given order).
  Table select_columns(std::span<const std::size_t> indices) const;
  /// Table restricted to the given rows (in the given order). Categorical
  /// levels are kept, so codes stay comparable with the source table.
  Table select_rows(std::span<const std::size_t> indices) const;
  Table renamed(std::string name) const;

  std::size_t numeric_count() const;
  std::size_t categorical_count() const;
  /// Fraction of missing cells over all cells.
  double missing_fraction() const;

 private:
  std::string name_;
  Domain domain_ = Domain::kOther;
  std::vector<Column> columns_;
  std::size_t rows_ = 0;
};

}  // namespace ticl::data
