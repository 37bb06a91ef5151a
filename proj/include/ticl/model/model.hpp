#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ticl/core/tensor.hpp"
#include "ticl/tasks/episode.hpp"

namespace ticl::model {

struct ModelConfig {
  std::size_t embed_dim = 128;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t ff_dim = 256;
  std::size_t max_features = 32;
  std::size_t max_classes = 10;
  double dropout = 0.0;

  /// Throws ConfigError on inconsistent sizes.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ParamSpec {
  std::string name;
  core::Shape shape;
};

/// Ordered parameter list; shapes depend only on the config.
std::vector<ParamSpec> parameter_layout(const ModelConfig& config);

template <typename T>
struct Weights {
  ModelConfig config;
  std::vector<core::Tensor<T>> params;

  /// Seeded random initialization.
  static Weights init(const ModelConfig& config, std::uint64_t seed);
  /// Throws DimensionError/NumericError unless `params` fits the layout and
  /// every entry is finite.
  void validate() const;
  std::size_t parameter_count() const;

  template <typename U>
  Weights<U> cast() const {
    Weights<U> out;
    out.config = config;
    for (const auto& p : params) out.params.push_back(p.template cast<U>());
    return out;
  }
};

template <typename T>
struct Predictions {
  core::Tensor<T> logits;      // [queries, max_classes]
  core::Tensor<T> regression;  // [queries, 1]
};

/// Attention pattern over the concatenated [context; query] rows: context
/// rows see the context, a query row sees the context and itself.
std::vector<std::uint8_t> attention_mask(std::size_t context, std::size_t query);

/// Runs the backbone on an episode. `params` may be tape-tracked copies of
/// the weights (training) or plain tensors (inference).
template <typename T>
Predictions<T> forward(const ModelConfig& config, std::span<const core::Tensor<T>> params,
                       const tasks::Episode& episode);

/// Cross-entropy over the episode's active classes, or squared error on the
/// standardized targets, depending on the episode head.
template <typename T>
core::Tensor<T> loss(const Predictions<T>& predictions, const tasks::Episode& episode);

struct DownstreamQuery {
  tasks::HeadKind head = tasks::HeadKind::kClassification;
  /// Raw row-major features with NaN for missing cells.
  std::span<const double> context_x;
  std::span<const double> context_y;
  std::span<const double> query_x;
  std::size_t features = 0;
  /// Classification only: number of source classes (width of the output).
  std::size_t class_count = 0;
};

/// Frozen-weight prediction with the same preprocessing as training
/// episodes. Classification returns [queries x class_count] probabilities in
/// source-class order with zero mass on classes missing from the context;
/// regression returns one de-standardized value per query. Throws
/// EpisodeRejected when the context targets are constant (regression).
template <typename T>
std::vector<double> predict_downstream(const Weights<T>& weights, const DownstreamQuery& query);

extern template struct Weights<float>;
extern template struct Weights<double>;

}  // namespace ticl::model
