#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ticl/core/tensor.hpp"

namespace ticl::core {

enum class OpKind {
  kLeaf,
  kMatmul,
  kAdd,
  kAddRow,
  kMulRow,
  kScale,
  kSoftmax,
  kLayerNorm,
  kGelu,
  kEmbed,
  kConcat,
  kSlice,
  kMean,
  kSum,
  kCrossEntropy,
  kSquaredError,
};

std::string_view op_name(OpKind kind);

/// Write access to the gradient buffers of one recorded node's inputs.
template <typename T>
class GradientSink {
 public:
  /// Accumulation buffer for input `slot`, or an empty span when that input
  /// is not tracked (a constant).
  virtual std::span<T> input(std::size_t slot) = 0;

 protected:
  ~GradientSink() = default;
};

template <typename T>
class Gradients;

/// Explicit reverse-mode recording. Single use: after backward() the tape
/// rejects further recording. Nodes are appended in creation order, so every
/// input id precedes the id of the node that consumes it.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const T> grad_out, GradientSink<T>& sink)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers `value` as a leaf; the returned tensor is tracked.
  Tensor<T> watch(const Tensor<T>& value);

  Gradients<T> backward(const Tensor<T>& loss);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }

  /// Used by operations: appends a node for `output` computed from `inputs`.
  Tensor<T> record(OpKind kind, std::span<const Tensor<T>* const> inputs, Tensor<T> output,
                   BackwardFn backward);

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Shape shape;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Gradient of a scalar loss with respect to every node of a tape.
template <typename T>
class Gradients {
 public:
  /// Gradient for a tensor recorded on the originating tape. Nodes that the
  /// loss does not depend on get zeros.
  Tensor<T> of(const Tensor<T>& tensor) const;
  Tensor<T> of_node(NodeId id) const;
  std::size_t size() const { return grads_.size(); }
  /// Number of nodes visited by the backward sweep.
  std::size_t visited() const { return visited_; }

 private:
  friend class Tape<T>;
  const Tape<T>* tape_ = nullptr;
  std::vector<Shape> shapes_;
  std::vector<std::vector<T>> grads_;
  std::size_t visited_ = 0;
};

/// Returns the tape shared by the tracked inputs, or nullptr if none is
/// tracked. Throws when inputs come from different tapes.
template <typename T>
Tape<T>* common_tape(std::span<const Tensor<T>* const> inputs);

extern template class Tape<float>;
extern template class Tape<double>;
extern template class Gradients<float>;
extern template class Gradients<double>;

}  // namespace ticl::core
