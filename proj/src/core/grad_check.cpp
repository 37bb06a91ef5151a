#include "ticl/core/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ticl/core/tape.hpp"

namespace ticl::core {
namespace {

double evaluate(const Fragment& fragment, std::span<const Tensor64> params) {
  return fragment(params).item();
}

}  // namespace

GradCheckResult grad_check(const Fragment& fragment, std::span<const Tensor64> params,
                           double tolerance, const GradCheckOptions& options) {
  std::vector<Tensor64> base(params.begin(), params.end());
  for (auto& p : base) p = p.detached();

  const Tensor64 first = fragment(base);
  const Tensor64 second = fragment(base);
  if (!first.bitwise_equal(second.detached())) {
    throw Error("grad_check: fragment is not deterministic (two forward passes disagree)");
  }

  Tape<double> tape;
  std::vector<Tensor64> tracked;
  tracked.reserve(base.size());
  for (const auto& p : base) tracked.push_back(tape.watch(p));
  const Tensor64 loss = fragment(tracked);
  if (!loss.tracked()) {
    // Output independent of every parameter: gradients are all zero.
    GradCheckResult result;
    result.passed = true;
    for (const auto& p : base) result.coordinates += std::min(p.size(), options.max_coordinates);
    return result;
  }
  const auto grads = tape.backward(loss);

  std::mt19937_64 gen(options.seed);
  GradCheckResult result;
  for (std::size_t pi = 0; pi < base.size(); ++pi) {
    const Tensor64 analytic = grads.of(tracked[pi]);
    std::vector<std::size_t> coords(base[pi].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > options.max_coordinates) {
      std::shuffle(coords.begin(), coords.end(), gen);
      coords.resize(options.max_coordinates);
    }
    for (const std::size_t c : coords) {
      std::vector<double> values(base[pi].values().begin(), base[pi].values().end());
      const double original = values[c];
      std::vector<Tensor64> probe = base;

      values[c] = original + options.step;
      probe[pi] = Tensor64(base[pi].shape(), values);
      const double plus = evaluate(fragment, probe);
      values[c] = original - options.step;
      probe[pi] = Tensor64(base[pi].shape(), values);
      const double minus = evaluate(fragment, probe);

      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[c];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      result.max_relative_error = std::max(result.max_relative_error, err);
      ++result.coordinates;
    }
  }
  result.passed = result.max_relative_error < tolerance;
  return result;
}

}  // namespace ticl::core
