#include "ticl/data/reference.hpp"

#include <fstream>
#include <sstream>

#include "ticl/core/checksum.hpp"
#include "ticl/core/errors.hpp"
#include "ticl/data/io.hpp"
#include "ticl/data/manifest.hpp"

namespace ticl::data {
namespace {

std::vector<ReferenceRecord> load_file(const std::filesystem::path& path, std::uint64_t checksum,
                                       Benchmark benchmark) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing bundled reference file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (core::fnv1a64(text) != checksum) {
    throw ChecksumError("bundled reference file '" + path.string() + "' failed its checksum");
  }
  const auto parsed = parse_delimited(text);
  const std::vector<std::string> expected{"name", "score", "instances", "features", "domain"};
  if (parsed.header != expected) throw DataError("unexpected header in '" + path.string() + "'");
  std::vector<ReferenceRecord> out;
  for (const auto& row : parsed.rows) {
    ReferenceRecord rec;
    rec.dataset = row[0];
    const auto score = parse_number(row[1]);
    const auto inst = parse_number(row[2]);
    const auto feat = parse_number(row[3]);
    if (!score || !inst || !feat) throw DataError("malformed reference row for '" + row[0] + "'");
    rec.score = *score;
    rec.instances = static_cast<std::size_t>(*inst);
    rec.features = static_cast<std::size_t>(*feat);
    rec.domain = parse_domain(row[4]);
    rec.benchmark = benchmark;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

std::string_view benchmark_name(Benchmark b) { return b == Benchmark::kCc18 ? "CC-18" : "CTR-23"; }

std::vector<ReferenceRecord> load_reference_records(const std::filesystem::path& data_dir) {
  auto records = load_file(data_dir / "reference" / "cc18_auc.csv", kCc18Checksum, Benchmark::kCc18);
  auto ctr = load_file(data_dir / "reference" / "ctr23_r2.csv", kCtr23Checksum, Benchmark::kCtr23);
  records.insert(records.end(), std::make_move_iterator(ctr.begin()), std::make_move_iterator(ctr.end()));
  return records;
}

std::vector<ReferenceRecord> load_reference_records() {
  return load_reference_records(default_data_dir());
}

std::vector<ReferenceRecord> reference_records(Benchmark benchmark) {
  std::vector<ReferenceRecord> out;
  for (auto& r : load_reference_records()) {
    if (r.benchmark == benchmark) out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ticl::data
