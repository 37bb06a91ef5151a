#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ticl/core/tape.hpp"
#include "ticl/core/tensor.hpp"

// Differentiable primitives. Each op records itself on the tape of its
// tracked inputs (if any) and throws DimensionError on shape mismatch and
// NumericError when a finite input yields a non-finite output.
//
// Broadcasting is limited to add_row/mul_row (a length-n vector applied to
// every row of an m x n matrix) and scale (a scalar).
namespace ticl::core::ops {

inline constexpr double kLayerNormEps = 1e-5;

/// [m,k] x [k,n] -> [m,n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// [m,k] x [n,k]^T -> [m,n]
template <typename T>
Tensor<T> matmul_transposed(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// [m,n] + [n] broadcast over rows.
template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& row);

/// [m,n] * [n] broadcast over rows.
template <typename T>
Tensor<T> mul_row(const Tensor<T>& a, const Tensor<T>& row);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

/// Softmax over the last dimension.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a);

/// Softmax over the last dimension restricted to entries where `allowed` is
/// non-zero; disallowed entries are exactly 0. Every row needs at least one
/// allowed entry. `allowed` has a.size() entries.
template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& a, std::span<const std::uint8_t> allowed);

/// Normalizes each last-dimension vector to zero mean and unit variance
/// (population variance + eps). No affine part.
template <typename T>
Tensor<T> layernorm(const Tensor<T>& a, double eps = kLayerNormEps);

/// Exact (erf-based) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a);

/// Gathers rows of `table` [V,d] -> [indices.size(), d].
template <typename T>
Tensor<T> embed(const Tensor<T>& table, std::span<const std::size_t> indices);

/// Concatenates rank-2 tensors along `axis` (0 = rows, 1 = columns).
template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);

/// Half-open range [begin, end) of a rank-2 tensor along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end);

/// Mean over all entries -> scalar.
template <typename T>
Tensor<T> mean(const Tensor<T>& a);

/// Sum over all entries -> scalar.
template <typename T>
Tensor<T> sum(const Tensor<T>& a);

/// Mean softmax cross-entropy of logits [n,C] against integer targets.
/// Only the first `active_classes` logits take part in the softmax (the rest
/// receive zero gradient); pass 0 to use all C.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> targets,
                        std::size_t active_classes = 0);

/// Mean of (prediction - target)^2 over all entries -> scalar.
template <typename T>
Tensor<T> squared_error(const Tensor<T>& prediction, const Tensor<T>& target);

}  // namespace ticl::core::ops
