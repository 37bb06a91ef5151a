#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ticl/core/tensor.hpp"

namespace ticl::core {

/// A deterministic scalar-valued graph over a list of parameters. The
/// parameters passed in are tracked when a tape is active.
using Fragment = std::function<Tensor64(std::span<const Tensor64> params)>;

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates sampled per parameter; parameters with fewer entries are
  /// checked exhaustively.
  std::size_t max_coordinates = 64;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  bool passed = false;
};

/// Compares reverse-mode gradients against central differences; per
/// coordinate error is |a - n| / max(1e-8, |a| + |n|). Throws if two
/// forward passes on the same parameters disagree.
GradCheckResult grad_check(const Fragment& fragment, std::span<const Tensor64> params,
                           double tolerance, const GradCheckOptions& options = {});

}  // namespace ticl::core
