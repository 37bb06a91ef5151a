#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ticl/data/io.hpp"

namespace ticl::data {

/// Named datasets with their domain tags, read from a JSON file:
///
///   {"datasets": [{"name": "wine", "path": "tables/wine.csv",
///                  "domain": "other-science", "target": "cultivar",
///                  "kinds": {"quality": "categorical"}}]}
///
/// Relative paths resolve against the manifest's directory.
class Manifest {
 public:
  static Manifest load(const std::filesystem::path& path);
  static Manifest parse(std::string_view json_text, const std::filesystem::path& base_dir);

  const std::vector<TableSpec>& entries() const { return entries_; }
  bool contains(std::string_view name) const;
  /// Throws ConfigError for unknown names.
  const TableSpec& at(std::string_view name) const;
  Table load_table(std::string_view name) const;

 private:
  std::vector<TableSpec> entries_;
};

/// Root of the bundled data: $TICL_DATA_DIR if set, else the compiled-in
/// source data directory.
std::filesystem::path default_data_dir();

}  // namespace ticl::data
