#include "ticl/core/tensor.hpp"

#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

namespace ticl::core {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)),
      data_(std::make_shared<const std::vector<T>>(std::move(values))) {
  if (shape_size(shape_) != data_->size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " holds " +
                         std::to_string(shape_size(shape_)) + " values, got " +
                         std::to_string(data_->size()));
  }
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape_));
  }
  return shape_[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (data_->size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_string(shape_));
  }
  return (*data_)[0];
}

template <typename T>
Tensor<T> Tensor<T>::detached() const {
  Tensor out = *this;
  out.tape_ = nullptr;
  out.node_ = kNoNode;
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_size(shape) != data_->size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out = detached();
  out.shape_ = std::move(shape);
  return out;
}

template <typename T>
bool Tensor<T>::bitwise_equal(const Tensor& other) const {
  return shape_ == other.shape_ && data_->size() == other.data_->size() &&
         std::memcmp(data_->data(), other.data_->data(), data_->size() * sizeof(T)) == 0;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace ticl::core
