#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ticl/core/errors.hpp"

namespace ticl::core {

using Shape = std::vector<std::size_t>;
using NodeId = std::size_t;

inline constexpr NodeId kNoNode = static_cast<NodeId>(-1);

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
class Tape;

/// Dense row-major tensor. Values are immutable once constructed; copies share
/// storage. A tensor produced under an active Tape carries its node id.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(Shape{0}, std::vector<T>{}) {}
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_->size(); }
  /// Rows/cols of a rank-2 tensor.
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::span<const T> values() const { return {data_->data(), data_->size()}; }
  const T* data() const { return data_->data(); }
  T operator[](std::size_t i) const { return (*data_)[i]; }
  T at(std::size_t r, std::size_t c) const { return (*data_)[r * shape_.back() + c]; }
  /// Value of a one-element tensor.
  T item() const;

  bool tracked() const { return tape_ != nullptr; }
  NodeId node() const { return node_; }
  Tape<T>* tape() const { return tape_; }

  /// Same values and shape, no tape association.
  Tensor detached() const;
  /// Same storage with a different shape of equal size (untracked).
  Tensor reshaped(Shape shape) const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_->begin(), data_->end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool bitwise_equal(const Tensor& other) const;

 private:
  friend class Tape<T>;
  Shape shape_;
  std::shared_ptr<const std::vector<T>> data_;
  Tape<T>* tape_ = nullptr;
  NodeId node_ = kNoNode;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace ticl::core
