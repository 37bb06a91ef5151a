#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ticl/core/tensor.hpp"

namespace ticl::core {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment accumulators, one per parameter, plus the step count.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  std::uint64_t step = 0;
};

/// Bias-corrected adaptive-moment update. Returns the updated parameters;
/// `state` is initialized on first use and its step counter advances by one.
template <typename T>
std::vector<Tensor<T>> adam_step(std::span<const Tensor<T>> params, std::span<const Tensor<T>> grads,
                                 AdamState<T>& state, double learning_rate);

extern template std::vector<Tensor<float>> adam_step(std::span<const Tensor<float>>,
                                                     std::span<const Tensor<float>>,
                                                     AdamState<float>&, double);
extern template std::vector<Tensor<double>> adam_step(std::span<const Tensor<double>>,
                                                      std::span<const Tensor<double>>,
                                                      AdamState<double>&, double);

}  // namespace ticl::core
