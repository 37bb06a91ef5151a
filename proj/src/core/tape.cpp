#include "ticl/core/tape.hpp"

#include <algorithm>

namespace ticl::core {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kAddRow: return "add-row";
    case OpKind::kMulRow: return "mul-row";
    case OpKind::kScale: return "scale";
    case OpKind::kSoftmax: return "softmax-lastdim";
    case OpKind::kLayerNorm: return "layernorm-lastdim";
    case OpKind::kGelu: return "gelu";
    case OpKind::kEmbed: return "embed-lookup";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kMean: return "mean";
    case OpKind::kSum: return "sum";
    case OpKind::kCrossEntropy: return "cross-entropy";
    case OpKind::kSquaredError: return "squared-error";
  }
  return "unknown";
}

template <typename T>
Tape<T>* common_tape(std::span<const Tensor<T>* const> inputs) {
  Tape<T>* tape = nullptr;
  for (const Tensor<T>* t : inputs) {
    if (!t->tracked()) continue;
    if (tape != nullptr && tape != t->tape()) {
      throw Error("operation mixes tensors from different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

template <typename T>
Tensor<T> Tape<T>::watch(const Tensor<T>& value) {
  const Tensor<T>* none[] = {};
  return record(OpKind::kLeaf, std::span<const Tensor<T>* const>(none, 0), value.detached(),
                nullptr);
}

template <typename T>
Tensor<T> Tape<T>::record(OpKind kind, std::span<const Tensor<T>* const> inputs,
                          Tensor<T> output, BackwardFn backward) {
  if (consumed_) throw Error("tape already consumed by backward()");
  Node node{kind, {}, output.shape(), std::move(backward)};
  node.inputs.reserve(inputs.size());
  for (const Tensor<T>* t : inputs) {
    if (t->tracked() && t->tape() != this) {
      throw Error("input recorded on a different tape");
    }
    node.inputs.push_back(t->tracked() ? t->node() : kNoNode);
  }
  output.tape_ = this;
  output.node_ = nodes_.size();
  nodes_.push_back(std::move(node));
  return output;
}

namespace {

template <typename T>
class NodeSink final : public GradientSink<T> {
 public:
  NodeSink(const std::vector<NodeId>& inputs, std::vector<std::vector<T>>& grads,
           const std::vector<Shape>& shapes)
      : inputs_(inputs), grads_(grads), shapes_(shapes) {}

  std::span<T> input(std::size_t slot) override {
    const NodeId id = inputs_.at(slot);
    if (id == kNoNode) return {};
    auto& g = grads_[id];
    if (g.empty()) g.assign(shape_size(shapes_[id]), T(0));
    return {g.data(), g.size()};
  }

 private:
  const std::vector<NodeId>& inputs_;
  std::vector<std::vector<T>>& grads_;
  const std::vector<Shape>& shapes_;
};

}  // namespace

template <typename T>
Gradients<T> Tape<T>::backward(const Tensor<T>& loss) {
  if (consumed_) throw Error("tape already consumed by backward()");
  if (loss.size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " +
                         shape_string(loss.shape()));
  }
  if (loss.tape() != this || loss.node() >= nodes_.size()) {
    throw Error("loss is not a node of this tape");
  }
  consumed_ = true;

  Gradients<T> result;
  result.tape_ = this;
  result.shapes_.reserve(nodes_.size());
  for (const Node& n : nodes_) result.shapes_.push_back(n.shape);
  result.grads_.resize(nodes_.size());
  result.grads_[loss.node()] = {T(1)};

  for (NodeId id = loss.node() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    ++result.visited_;
    if (!node.backward || result.grads_[id].empty()) continue;
    NodeSink<T> sink(node.inputs, result.grads_, result.shapes_);
    const auto& g = result.grads_[id];
    node.backward(std::span<const T>(g.data(), g.size()), sink);
  }
  // Nodes recorded after the loss cannot influence it but still count as
  // visited by the sweep.
  result.visited_ += nodes_.size() - loss.node() - 1;
  return result;
}

template <typename T>
Tensor<T> Gradients<T>::of(const Tensor<T>& tensor) const {
  if (tensor.tape() != tape_) throw Error("tensor is not recorded on this tape");
  return of_node(tensor.node());
}

template <typename T>
Tensor<T> Gradients<T>::of_node(NodeId id) const {
  if (id >= grads_.size()) throw Error("node " + std::to_string(id) + " not on tape");
  if (grads_[id].empty()) return Tensor<T>::zeros(shapes_[id]);
  return Tensor<T>(shapes_[id], grads_[id]);
}

template class Tape<float>;
template class Tape<double>;
template class Gradients<float>;
template class Gradients<double>;
template Tape<float>* common_tape(std::span<const Tensor<float>* const>);
template Tape<double>* common_tape(std::span<const Tensor<double>* const>);

}  // namespace ticl::core
