#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ticl/data/table.hpp"

namespace ticl::data {

enum class Benchmark { kCc18, kCtr23 };

std::string_view benchmark_name(Benchmark b);

/// Published downstream score of a model pre-trained on one dataset: mean
/// AUC over the CC-18 suite or mean R^2 over the CTR-23 suite.
struct ReferenceRecord {
  std::string dataset;
  double score = 0.0;
  std::size_t instances = 0;
  std::size_t features = 0;
  Domain domain = Domain::kOther;
  Benchmark benchmark = Benchmark::kCc18;
};

/// FNV-1a digests of the bundled reference files.
inline constexpr std::uint64_t kCc18Checksum = 0x3abbbda3c68e4501ULL;
inline constexpr std::uint64_t kCtr23Checksum = 0x12b354b42bfb0e99ULL;

/// Loads both bundled reference tables (CC-18 records first, each in the
/// published order). Throws ChecksumError if a file differs from the bundle.
std::vector<ReferenceRecord> load_reference_records(
    const std::filesystem::path& data_dir);
std::vector<ReferenceRecord> load_reference_records();

/// Records for one benchmark only.
std::vector<ReferenceRecord> reference_records(Benchmark benchmark);

}  // namespace ticl::data
