#include "ticl/core/adam.hpp"

#include <cmath>
#include <string>

namespace ticl::core {

template <typename T>
std::vector<Tensor<T>> adam_step(std::span<const Tensor<T>> params, std::span<const Tensor<T>> grads,
                                 AdamState<T>& state, double learning_rate) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (state.first_moment.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), T(0));
      state.second_moment.emplace_back(p.size(), T(0));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape() || state.first_moment[i].size() != params[i].size()) {
      throw DimensionError("adam: parameter " + std::to_string(i) + " has shape " +
                           shape_string(params[i].shape()) + ", gradient " +
                           shape_string(grads[i].shape()));
    }
  }

  state.step += 1;
  const auto& cfg = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);

  std::vector<Tensor<T>> updated;
  updated.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    std::vector<T> out(params[i].values().begin(), params[i].values().end());
    for (std::size_t j = 0; j < out.size(); ++j) {
      const double g = grads[i][j];
      m[j] = static_cast<T>(cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g);
      v[j] = static_cast<T>(cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g);
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      out[j] = static_cast<T>(out[j] - learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
    updated.emplace_back(params[i].shape(), std::move(out));
  }
  return updated;
}

template std::vector<Tensor<float>> adam_step(std::span<const Tensor<float>>,
                                              std::span<const Tensor<float>>, AdamState<float>&,
                                              double);
template std::vector<Tensor<double>> adam_step(std::span<const Tensor<double>>,
                                               std::span<const Tensor<double>>, AdamState<double>&,
                                               double);

}  // namespace ticl::core
