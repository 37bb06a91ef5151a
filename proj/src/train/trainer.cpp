#include "ticl/train/trainer.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "ticl/core/adam.hpp"
#include "ticl/core/checksum.hpp"
#include "ticl/core/errors.hpp"
#include "ticl/core/ops.hpp"
#include "ticl/core/rng.hpp"
#include "ticl/train/config_io.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");

namespace ticl::train {
namespace {

constexpr char kMagic[4] = {'T', 'I', 'C', 'L'};
constexpr std::size_t kRetriesPerTask = 16;
constexpr std::size_t kStormWindow = 100;
constexpr double kStormRate = 0.9;

// Task order: one shuffled pass over the list after another.
class TaskCursor {
 public:
  TaskCursor(std::size_t tasks, std::uint64_t seed) : tasks_(tasks), seed_(seed) {}

  std::size_t next() {
    const std::uint64_t pass = position_ / tasks_;
    if (order_.empty() || pass != pass_) {
      order_.resize(tasks_);
      std::iota(order_.begin(), order_.end(), 0);
      core::Rng rng = core::make_stream(seed_, 0x0dde7, pass);
      std::shuffle(order_.begin(), order_.end(), rng);
      pass_ = pass;
    }
    return order_[position_++ % tasks_];
  }

 private:
  std::size_t tasks_;
  std::uint64_t seed_;
  std::uint64_t position_ = 0;
  std::uint64_t pass_ = 0;
  std::vector<std::size_t> order_;
};

class StormGuard {
 public:
  void record(bool rejected) {
    window_.push_back(rejected);
    rejects_ += rejected ? 1 : 0;
    if (window_.size() > kStormWindow) {
      rejects_ -= window_.front() ? 1 : 0;
      window_.pop_front();
    }
    if (window_.size() == kStormWindow &&
        static_cast<double>(rejects_) > kStormRate * static_cast<double>(kStormWindow)) {
      throw ConfigError("episode rejection storm: " + std::to_string(rejects_) + " of the last " +
                        std::to_string(kStormWindow) + " draws were rejected");
    }
  }

 private:
  std::deque<bool> window_;
  std::size_t rejects_ = 0;
};

std::optional<double> tail_mean(const std::vector<TraceRow>& trace, bool cls) {
  const std::size_t window = std::max<std::size_t>(1, trace.size() / 10);
  double total = 0;
  std::size_t n = 0;
  for (std::size_t i = trace.size() - std::min(window, trace.size()); i < trace.size(); ++i) {
    const auto& v = cls ? trace[i].cls_loss : trace[i].reg_loss;
    if (v) {
      total += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return total / static_cast<double>(n);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> json_optional(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

template <typename T>
void put(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const char* what) {
  if (in.size() < pos + sizeof(T)) throw FormatError(std::string("checkpoint truncated in ") + what);
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TrainConfig TrainConfig::with_steps(std::size_t steps) {
  TrainConfig c;
  c.steps = steps;
  c.warmup_steps = steps / 20;
  return c;
}

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("steps must be at least 1");
  if (warmup_steps >= steps) {
    throw ConfigError("warmup " + std::to_string(warmup_steps) + " must be below steps " +
                      std::to_string(steps));
  }
  if (batch < 1) throw ConfigError("batch must be at least 1");
  if (context < 1 || query < 1) throw ConfigError("context and query sizes must be positive");
  if (budget < 1) throw ConfigError("task budget must be at least 1");
  if (!(peak_lr >= 0.0) || !std::isfinite(peak_lr)) throw ConfigError("peak learning rate must be >= 0");
  if (!(floor_fraction >= 0.0 && floor_fraction <= 1.0)) {
    throw ConfigError("floor fraction must lie in [0, 1]");
  }
}

double learning_rate(const TrainConfig& c, std::size_t step) {
  if (step < c.warmup_steps) {
    return c.peak_lr * static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps);
  }
  const double span = static_cast<double>(std::max<std::size_t>(1, c.steps - c.warmup_steps - 1));
  const double progress = std::min(1.0, static_cast<double>(step - c.warmup_steps) / span);
  const double floor = c.floor_fraction * c.peak_lr;
  return floor + (c.peak_lr - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::pair<std::size_t, std::size_t> fit_episode_sizes(std::size_t context, std::size_t query,
                                                      std::size_t usable) {
  if (context + query <= usable) return {context, query};
  if (usable < 2) throw ConfigError("need at least 2 labelled rows for an episode");
  std::size_t q = std::max<std::size_t>(1, usable * query / (context + query));
  return {usable - q, q};
}

TrainResult pretrain(const data::Table& table, const tasks::TaskSpace& space,
                     const model::ModelConfig& model_config, const TrainConfig& config,
                     const TrainHooks& hooks) {
  model_config.validate();
  config.validate();
  if (space.tasks.empty()) throw ConfigError("task space for '" + table.name() + "' is empty");
  if (space.table != table.name()) {
    throw ConfigError("task space belongs to '" + space.table + "', not '" + table.name() + "'");
  }

  TrainResult result;
  auto& ckpt = result.checkpoint;
  ckpt.model = model_config;
  ckpt.train = config;
  ckpt.table = table.name();
  ckpt.weights = model::Weights<float>::init(model_config, core::stream_seed(config.seed, 0x3e19));

  std::vector<std::size_t> usable(space.tasks.size(), 0);
  for (std::size_t i = 0; i < space.tasks.size(); ++i) {
    usable[i] = tasks::usable_rows(table, space.tasks[i].target).size();
  }

  core::AdamState<float> adam;
  TaskCursor cursor(space.tasks.size(), config.seed);
  StormGuard storm;
  result.trace.reserve(config.steps);

  for (std::size_t step = 0; step < config.steps; ++step) {
    std::vector<tasks::Episode> batch;
    batch.reserve(config.batch);
    while (batch.size() < config.batch) {
      const std::size_t t = cursor.next();
      const auto [ctx, qry] = fit_episode_sizes(config.context, config.query, usable[t]);
      const tasks::EpisodeConfig ecfg{ctx, qry, model_config.max_features, model_config.max_classes};
      const std::uint64_t episode = step * config.batch + batch.size();
      for (std::size_t attempt = 0; attempt < kRetriesPerTask; ++attempt) {
        core::Rng rng = core::make_stream(config.seed, core::mix64(episode), attempt);
        ++ckpt.rng_cursor;
        try {
          batch.push_back(tasks::build_episode(table, space.tasks[t], ecfg, rng));
          storm.record(false);
          break;
        } catch (const EpisodeRejected&) {
          ++result.rejected;
          storm.record(true);
        }
      }
    }

    TraceRow row;
    row.step = step;
    row.lr = learning_rate(config, step);
    try {
      core::Tape<float> tape;
      std::vector<core::Tensor32> tracked;
      tracked.reserve(ckpt.weights.params.size());
      for (const auto& p : ckpt.weights.params) tracked.push_back(tape.watch(p));

      core::Tensor32 total;
      double cls_sum = 0, reg_sum = 0;
      std::size_t cls_n = 0, reg_n = 0;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto l = model::loss(model::forward<float>(model_config, tracked, batch[b]), batch[b]);
        const double v = l.item();
        if (!std::isfinite(v)) throw NumericError("non-finite episode loss");
        if (batch[b].head == tasks::HeadKind::kClassification) {
          cls_sum += v;
          ++cls_n;
        } else {
          reg_sum += v;
          ++reg_n;
        }
        total = b == 0 ? l : core::ops::add(total, l);
      }
      if (cls_n > 0) row.cls_loss = cls_sum / static_cast<double>(cls_n);
      if (reg_n > 0) row.reg_loss = reg_sum / static_cast<double>(reg_n);
      const auto objective = core::ops::scale(total, 1.0f / static_cast<float>(batch.size()));
      const auto grads = tape.backward(objective);
      std::vector<core::Tensor32> g;
      g.reserve(tracked.size());
      for (const auto& p : tracked) g.push_back(grads.of(p));
      ckpt.weights.params = core::adam_step<float>(ckpt.weights.params, g, adam, row.lr);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }

    result.trace.push_back(row);
    ckpt.step = step + 1;
    if (hooks.on_step) hooks.on_step(row);
    if (config.checkpoint_every > 0 && ckpt.step % config.checkpoint_every == 0 &&
        ckpt.step < config.steps && hooks.on_checkpoint) {
      ckpt.final_cls_loss = tail_mean(result.trace, true);
      ckpt.final_reg_loss = tail_mean(result.trace, false);
      hooks.on_checkpoint(ckpt);
    }
  }
  ckpt.final_cls_loss = tail_mean(result.trace, true);
  ckpt.final_reg_loss = tail_mean(result.trace, false);
  if (hooks.on_checkpoint) hooks.on_checkpoint(ckpt);
  return result;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  c.weights.validate();
  const auto layout = model::parameter_layout(c.model);
  nlohmann::json arrays = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const std::uint64_t bytes = c.weights.params[i].size() * sizeof(float);
    arrays.push_back({{"name", layout[i].name},
                      {"shape", layout[i].shape},
                      {"dtype", "f32le"},
                      {"offset", offset},
                      {"bytes", bytes}});
    offset += bytes;
  }
  const nlohmann::json meta = {{"model", c.model},
                               {"train", c.train},
                               {"table", c.table},
                               {"step", c.step},
                               {"final_cls_loss", optional_json(c.final_cls_loss)},
                               {"final_reg_loss", optional_json(c.final_reg_loss)},
                               {"rng_cursor", c.rng_cursor},
                               {"payload_bytes", offset},
                               {"arrays", arrays}};
  const std::string text = meta.dump();

  std::string body;
  put<std::uint64_t>(body, text.size());
  body += text;
  for (const auto& p : c.weights.params) {
    body.append(reinterpret_cast<const char*>(p.data()), p.size() * sizeof(float));
  }
  core::Fnv1a64 hash;
  hash.update(std::as_bytes(std::span(body.data(), body.size())));

  std::string file(kMagic, 4);
  put<std::uint32_t>(file, kCheckpointVersion);
  file += body;
  put<std::uint64_t>(file, hash.digest());

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write checkpoint " + tmp.string());
    out.write(file.data(), static_cast<std::streamsize>(file.size()));
    if (!out) throw FormatError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string file = read_file(path);
  if (file.size() < 4 || std::memcmp(file.data(), kMagic, 4) != 0) {
    throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  }
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(file, pos, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  }
  const std::size_t body_start = pos;
  const auto meta_len = take<std::uint64_t>(file, pos, "metadata length");
  if (meta_len > file.size() - pos) throw FormatError("checkpoint truncated in metadata");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(file.substr(pos, meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata unreadable: ") + e.what());
  }
  pos += meta_len;

  Checkpoint c;
  std::uint64_t payload = 0;
  try {
    c.model = meta.at("model").get<model::ModelConfig>();
    c.train = meta.at("train").get<TrainConfig>();
    c.table = meta.at("table").get<std::string>();
    c.step = meta.at("step").get<std::uint64_t>();
    c.final_cls_loss = json_optional(meta.at("final_cls_loss"));
    c.final_reg_loss = json_optional(meta.at("final_reg_loss"));
    c.rng_cursor = meta.at("rng_cursor").get<std::uint64_t>();
    payload = meta.at("payload_bytes").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata incomplete: ") + e.what());
  }
  if (file.size() < pos || file.size() - pos < sizeof(std::uint64_t) ||
      file.size() - pos - sizeof(std::uint64_t) != payload) {
    throw FormatError("checkpoint payload holds " +
                      std::to_string(file.size() < pos + 8 ? 0 : file.size() - pos - 8) +
                      " bytes, header declares " + std::to_string(payload));
  }
  core::Fnv1a64 hash;
  hash.update(std::as_bytes(std::span(file.data() + body_start, file.size() - 8 - body_start)));
  std::size_t tail = file.size() - 8;
  const auto stored = take<std::uint64_t>(file, tail, "checksum");
  if (stored != hash.digest()) throw ChecksumError("checkpoint checksum mismatch in " + path.string());

  const auto layout = model::parameter_layout(c.model);
  const auto& arrays = meta.at("arrays");
  if (arrays.size() != layout.size()) {
    throw FormatError("checkpoint lists " + std::to_string(arrays.size()) + " arrays, config needs " +
                      std::to_string(layout.size()));
  }
  c.weights.config = c.model;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& a = arrays[i];
    const auto shape = a.at("shape").get<core::Shape>();
    if (a.at("name").get<std::string>() != layout[i].name || shape != layout[i].shape) {
      throw DimensionError("checkpoint array '" + a.at("name").get<std::string>() + "' has shape " +
                           core::shape_string(shape) + ", expected '" + layout[i].name + "' " +
                           core::shape_string(layout[i].shape));
    }
    const auto offset = a.at("offset").get<std::uint64_t>();
    const auto bytes = a.at("bytes").get<std::uint64_t>();
    if (bytes != core::shape_size(shape) * sizeof(float) || offset + bytes > payload) {
      throw FormatError("checkpoint array '" + layout[i].name + "' has inconsistent extent");
    }
    std::vector<float> values(core::shape_size(shape));
    std::memcpy(values.data(), file.data() + pos + offset, bytes);
    c.weights.params.emplace_back(shape, std::move(values));
  }
  c.weights.validate();
  return c;
}

std::uint64_t checkpoint_checksum(const std::filesystem::path& path) {
  const std::string file = read_file(path);
  if (file.size() < 8) throw FormatError("checkpoint truncated");
  std::size_t pos = file.size() - 8;
  return take<std::uint64_t>(file, pos, "checksum");
}

void require_compatible(const Checkpoint& c, const model::ModelConfig& e) {
  auto check = [](const char* what, std::size_t have, std::size_t want) {
    if (have != want) {
      throw DimensionError(std::string("checkpoint ") + what + " is " + std::to_string(have) +
                           ", consumer expects " + std::to_string(want));
    }
  };
  check("max_features", c.model.max_features, e.max_features);
  check("max_classes", c.model.max_classes, e.max_classes);
  check("embed_dim", c.model.embed_dim, e.embed_dim);
  check("layers", c.model.layers, e.layers);
  check("heads", c.model.heads, e.heads);
  check("ff_dim", c.model.ff_dim, e.ff_dim);
}

void write_trace(const std::vector<TraceRow>& trace, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write trace " + path.string());
  out << "step,cls_loss,reg_loss,lr\n";
  for (const auto& r : trace) {
    out << r.step << ',' << (r.cls_loss ? format_double(*r.cls_loss) : "") << ','
        << (r.reg_loss ? format_double(*r.reg_loss) : "") << ',' << format_double(r.lr) << '\n';
  }
}

std::vector<TraceRow> read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open trace " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "step,cls_loss,reg_loss,lr") throw FormatError("unexpected trace header in " + path.string());
  std::vector<TraceRow> out;
  auto number = [&](std::string_view s) {
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw FormatError("bad number '" + std::string(s) + "' in trace");
    }
    return v;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    for (std::size_t cut; (cut = rest.find(',')) != std::string_view::npos; rest.remove_prefix(cut + 1)) {
      cells.push_back(rest.substr(0, cut));
    }
    cells.push_back(rest);
    if (cells.size() != 4) throw FormatError("trace row has " + std::to_string(cells.size()) + " cells");
    TraceRow r;
    r.step = static_cast<std::size_t>(number(cells[0]));
    if (!cells[1].empty()) r.cls_loss = number(cells[1]);
    if (!cells[2].empty()) r.reg_loss = number(cells[2]);
    r.lr = number(cells[3]);
    out.push_back(r);
  }
  return out;
}

}  // namespace ticl::train
