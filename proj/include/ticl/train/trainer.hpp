#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ticl/model/model.hpp"
#include "ticl/tasks/task_space.hpp"

namespace ticl::train {

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch = 8;
  std::size_t context = 128;
  std::size_t query = 32;
  std::uint64_t budget = 50000;
  double peak_lr = 3e-4;
  /// Linear warmup length; the rest of the run follows a cosine decay from
  /// the peak to floor_fraction * peak.
  std::size_t warmup_steps = 100;
  double floor_fraction = 0.1;
  std::uint64_t seed = 0;
  /// Intermediate checkpoints every this many steps (0 = only at the end).
  std::size_t checkpoint_every = 0;

  /// Warmup at 5% of the steps.
  static TrainConfig with_steps(std::size_t steps);
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

double learning_rate(const TrainConfig& config, std::size_t step);

struct TraceRow {
  std::size_t step = 0;
  /// Mean loss over the batch's episodes of each head; nullopt if the batch
  /// had none of that head.
  std::optional<double> cls_loss;
  std::optional<double> reg_loss;
  double lr = 0.0;
};

struct Checkpoint {
  model::ModelConfig model;
  TrainConfig train;
  std::string table;
  model::Weights<float> weights;
  std::uint64_t step = 0;
  /// Mean per-head loss over the last 10% of the trace.
  std::optional<double> final_cls_loss;
  std::optional<double> final_reg_loss;
  /// Episodes drawn so far, rejected attempts included.
  std::uint64_t rng_cursor = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TraceRow> trace;
  std::uint64_t rejected = 0;
};

struct TrainHooks {
  /// Called after every step with the finished trace row.
  std::function<void(const TraceRow&)> on_step;
  /// Called at each checkpoint cadence boundary.
  std::function<void(const Checkpoint&)> on_checkpoint;
};

/// Pre-trains from scratch on one table. Tasks are visited round-robin in an
/// order reshuffled every pass over the list; episodes whose context is
/// degenerate are redrawn from the next substream. Throws NumericError
/// (with the step) on divergence and ConfigError on a rejection storm.
TrainResult pretrain(const data::Table& table, const tasks::TaskSpace& space,
                     const model::ModelConfig& model_config, const TrainConfig& train_config,
                     const TrainHooks& hooks = {});

/// Context/query sizes for a task with `usable` labelled rows: the
/// configured sizes when they fit, else the same ratio shrunk to fit.
std::pair<std::size_t, std::size_t> fit_episode_sizes(std::size_t context, std::size_t query,
                                                      std::size_t usable);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Throws FormatError on bad magic, version, truncation or inconsistent
/// lengths and ChecksumError when the payload checksum disagrees.
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// FNV-1a digest stored in a checkpoint file.
std::uint64_t checkpoint_checksum(const std::filesystem::path& path);
/// Throws DimensionError naming the first mismatching size.
void require_compatible(const Checkpoint& checkpoint, const model::ModelConfig& expected);

void write_trace(const std::vector<TraceRow>& trace, const std::filesystem::path& path);
std::vector<TraceRow> read_trace(const std::filesystem::path& path);

}  // namespace ticl::train
