#include "ticl/data/manifest.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ticl/core/errors.hpp"

#ifndef TICL_DATA_DIR
#define TICL_DATA_DIR "data"
#endif

namespace ticl::data {

using nlohmann::json;

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read manifest '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.parent_path());
}

Manifest Manifest::parse(std::string_view json_text, const std::filesystem::path& base_dir) {
  Manifest m;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.contains("datasets") || !doc["datasets"].is_array()) {
    throw ConfigError("manifest needs a 'datasets' array");
  }
  for (const auto& item : doc["datasets"]) {
    TableSpec spec;
    try {
      spec.name = item.at("name").get<std::string>();
      const std::filesystem::path p = item.at("path").get<std::string>();
      spec.path = p.is_absolute() ? p : base_dir / p;
      spec.domain = parse_domain(item.value("domain", std::string("other")));
      if (item.contains("target")) spec.target = item["target"].get<std::string>();
      if (item.contains("kinds")) {
        for (const auto& [col, kind] : item["kinds"].items()) {
          spec.kind_overrides[col] = parse_kind(kind.get<std::string>());
        }
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed manifest entry: ") + e.what());
    } catch (const DataError& e) {
      throw ConfigError(std::string("manifest entry '") + spec.name + "': " + e.what());
    }
    if (m.contains(spec.name)) throw ConfigError("duplicate manifest entry '" + spec.name + "'");
    m.entries_.push_back(std::move(spec));
  }
  return m;
}

bool Manifest::contains(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

const TableSpec& Manifest::at(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw ConfigError("dataset '" + std::string(name) + "' is not in the manifest");
}

Table Manifest::load_table(std::string_view name) const { return data::load_table(at(name)); }

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("TICL_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return TICL_DATA_DIR;
}

}  // namespace ticl::data
