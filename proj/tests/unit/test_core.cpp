#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "ticl/core/adam.hpp"
#include "ticl/core/grad_check.hpp"
#include "ticl/core/ops.hpp"

using namespace ticl;
using namespace ticl::core;

namespace {

Tensor64 random_tensor(Shape shape, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = dist(gen);
  return Tensor64(std::move(shape), std::move(v));
}

Tensor64 weighted_sum(const Tensor64& t, std::mt19937_64& gen) {
  // Random projection to a scalar so every output coordinate matters.
  return ops::sum(ops::mul_row(t.rank() == 2 ? t : t.reshaped({1, t.size()}),
                               random_tensor({t.rank() == 2 ? t.cols() : t.size()}, gen)));
}

}  // namespace

TEST_CASE("matmul with identity returns the other operand") {
  std::mt19937_64 gen(1);
  const auto a = random_tensor({3, 3}, gen);
  const Tensor64 eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(ops::matmul(eye, a).bitwise_equal(a));
}

TEST_CASE("softmax of zeros is uniform") {
  const auto y = ops::softmax(Tensor64::zeros({4}));
  for (double v : y.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("layernorm matches the direct formula") {
  const auto y = ops::layernorm(Tensor64({3}, {1, 2, 3}));
  const double mu = 2.0;
  const double var = (1.0 + 0.0 + 1.0) / 3.0;
  const double denom = std::sqrt(var + 1e-5);
  CHECK(y[0] == doctest::Approx((1 - mu) / denom).epsilon(1e-14));
  CHECK(y[1] == doctest::Approx(0.0));
  CHECK(y[2] == doctest::Approx((3 - mu) / denom).epsilon(1e-14));
}

TEST_CASE("softmax rows are distributions") {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_tensor({5, 7}, gen, 4.0);
    const auto y = ops::softmax(x);
    for (std::size_t r = 0; r < 5; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(y.at(r, c) >= 0.0);
        total += y.at(r, c);
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("masked softmax puts exactly zero on disallowed entries") {
  const Tensor64 x({2, 3}, {1, 2, 3, 4, 5, 6});
  const std::vector<std::uint8_t> allowed{1, 0, 1, 0, 1, 0};
  const auto y = ops::masked_softmax(x, allowed);
  CHECK(y.at(0, 1) == 0.0);
  CHECK(y.at(1, 0) == 0.0);
  CHECK(y.at(1, 2) == 0.0);
  CHECK(y.at(1, 1) == 1.0);
  CHECK(y.at(0, 0) + y.at(0, 2) == doctest::Approx(1.0));
  const std::vector<std::uint8_t> none{0, 0, 0, 1, 1, 1};
  CHECK_THROWS_AS(ops::masked_softmax(x, none), NumericError);
}

TEST_CASE("layernorm output is standardized up to the epsilon adjustment") {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_tensor({4, 16}, gen, 3.0);
    const auto y = ops::layernorm(x);
    for (std::size_t r = 0; r < 4; ++r) {
      double mu = 0, in_mu = 0;
      for (std::size_t c = 0; c < 16; ++c) {
        mu += y.at(r, c);
        in_mu += x.at(r, c);
      }
      mu /= 16;
      in_mu /= 16;
      double var = 0, in_var = 0;
      for (std::size_t c = 0; c < 16; ++c) {
        var += (y.at(r, c) - mu) * (y.at(r, c) - mu);
        in_var += (x.at(r, c) - in_mu) * (x.at(r, c) - in_mu);
      }
      var /= 16;
      in_var /= 16;
      CHECK(std::abs(mu) < 1e-9);
      // Output variance is v / (v + eps); undo that factor before comparing.
      CHECK(std::abs(var * (in_var + ops::kLayerNormEps) / in_var - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("backward of sum is all ones") {
  Tape<double> tape;
  const auto w = tape.watch(Tensor64({2, 3}, {1, -2, 3, 4, 5, -6}));
  const auto grads = tape.backward(ops::sum(w));
  const auto g = grads.of(w);
  CHECK(g.shape() == Shape{2, 3});
  for (double v : g.values()) CHECK(v == 1.0);
}

TEST_CASE("backward of squared error through a scalar product") {
  Tape<double> tape;
  const auto w = tape.watch(Tensor64({1, 1}, {3.0}));
  const Tensor64 x({1, 1}, {2.0});
  const Tensor64 y({1, 1}, {0.0});
  const auto loss = ops::squared_error(ops::matmul(w, x), y);
  CHECK(loss.item() == 36.0);
  const auto grads = tape.backward(loss);
  CHECK(grads.of(w).item() == 24.0);
  CHECK(grads.of(loss).item() == 1.0);
}

TEST_CASE("tape is topological and backward visits every node once") {
  std::mt19937_64 gen(4);
  Tape<double> tape;
  const auto a = tape.watch(random_tensor({3, 4}, gen));
  const auto b = tape.watch(random_tensor({4, 2}, gen));
  const auto h = ops::gelu(ops::matmul(a, b));
  const auto loss = ops::mean(ops::layernorm(h));
  for (NodeId id = 0; id < tape.size(); ++id) {
    for (NodeId in : tape.inputs(id)) {
      if (in != kNoNode) CHECK(in < id);
    }
  }
  const auto grads = tape.backward(loss);
  CHECK(grads.visited() == tape.size());
  CHECK(tape.consumed());
  CHECK_THROWS(ops::add(a, a));
}

TEST_CASE("backward rejects non-scalar losses and foreign tensors") {
  Tape<double> tape;
  const auto a = tape.watch(Tensor64({2}, {1, 2}));
  CHECK_THROWS_AS(tape.backward(a), DimensionError);
  Tape<double> other;
  const auto b = other.watch(Tensor64::scalar(1.0));
  CHECK_THROWS(tape.backward(b));
  const auto grads = other.backward(b);
  CHECK_THROWS(grads.of(a));
}

TEST_CASE("shape mismatch names both shapes") {
  try {
    ops::matmul(Tensor64::zeros({2, 3}), Tensor64::zeros({2, 3}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("matmul") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::add(Tensor64::zeros({2}), Tensor64::zeros({3})), DimensionError);
  CHECK_THROWS_AS(ops::add_row(Tensor64::zeros({2, 3}), Tensor64::zeros({2})), DimensionError);
  CHECK_THROWS_AS(Tensor64({2, 2}, {1, 2, 3}), DimensionError);
}

TEST_CASE("non-finite outputs raise a numeric error naming the op") {
  const Tensor64 big({1, 1}, {1e200});
  try {
    ops::matmul(big, big);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::scale(big, 1e200), NumericError);
}

TEST_CASE("same graph twice is bitwise identical") {
  std::mt19937_64 gen(5);
  const auto x = random_tensor({6, 8}, gen);
  const auto w = random_tensor({8, 8}, gen);
  auto run = [&] { return ops::softmax(ops::gelu(ops::layernorm(ops::matmul(x, w)))); };
  CHECK(run().bitwise_equal(run()));
}

TEST_CASE("gradient check on every primitive") {
  std::mt19937_64 gen(6);
  std::mt19937_64 proj_gen(60);
  const auto proj = [&](const Tensor64& t) {
    std::mt19937_64 g = proj_gen;
    return weighted_sum(t, g);
  };
  struct Case {
    const char* name;
    std::vector<Tensor64> params;
    Fragment fn;
  };
  const std::vector<std::size_t> idx{2, 0, 2, 1};
  const std::vector<std::size_t> targets{1, 0, 2};
  std::vector<Case> cases;
  cases.push_back({"matmul", {random_tensor({3, 4}, gen), random_tensor({4, 2}, gen)},
                   [&](auto p) { return proj(ops::matmul(p[0], p[1])); }});
  cases.push_back({"matmul_transposed", {random_tensor({3, 4}, gen), random_tensor({5, 4}, gen)},
                   [&](auto p) { return proj(ops::matmul_transposed(p[0], p[1])); }});
  cases.push_back({"add", {random_tensor({3, 4}, gen), random_tensor({3, 4}, gen)},
                   [&](auto p) { return proj(ops::add(p[0], p[1])); }});
  cases.push_back({"add_row", {random_tensor({3, 4}, gen), random_tensor({4}, gen)},
                   [&](auto p) { return proj(ops::add_row(p[0], p[1])); }});
  cases.push_back({"mul_row", {random_tensor({3, 4}, gen), random_tensor({4}, gen)},
                   [&](auto p) { return proj(ops::mul_row(p[0], p[1])); }});
  cases.push_back({"scale", {random_tensor({3, 4}, gen)},
                   [&](auto p) { return proj(ops::scale(p[0], 0.37)); }});
  cases.push_back({"softmax", {random_tensor({3, 5}, gen)},
                   [&](auto p) { return proj(ops::softmax(p[0])); }});
  const std::vector<std::uint8_t> allowed{1, 1, 0, 1, 0, 1, 1, 1, 0, 1, 0, 1, 1, 1, 1};
  cases.push_back({"masked_softmax", {random_tensor({3, 5}, gen)},
                   [&](auto p) { return proj(ops::masked_softmax(p[0], allowed)); }});
  cases.push_back({"layernorm", {random_tensor({3, 6}, gen)},
                   [&](auto p) { return proj(ops::layernorm(p[0])); }});
  cases.push_back({"gelu", {random_tensor({3, 4}, gen)},
                   [&](auto p) { return proj(ops::gelu(p[0])); }});
  cases.push_back({"embed", {random_tensor({3, 4}, gen)},
                   [&](auto p) { return proj(ops::embed(p[0], idx)); }});
  cases.push_back({"concat_rows", {random_tensor({2, 3}, gen), random_tensor({1, 3}, gen)},
                   [&](auto p) { return proj(ops::concat(std::span<const Tensor64>(p.data(), 2), 0)); }});
  cases.push_back({"concat_cols", {random_tensor({2, 3}, gen), random_tensor({2, 2}, gen)},
                   [&](auto p) { return proj(ops::concat(std::span<const Tensor64>(p.data(), 2), 1)); }});
  cases.push_back({"slice", {random_tensor({4, 5}, gen)},
                   [&](auto p) { return proj(ops::slice(ops::slice(p[0], 1, 1, 4), 0, 1, 3)); }});
  cases.push_back({"mean", {random_tensor({3, 4}, gen)}, [&](auto p) { return ops::mean(p[0]); }});
  cases.push_back({"sum", {random_tensor({3, 4}, gen)}, [&](auto p) { return ops::sum(p[0]); }});
  cases.push_back({"cross_entropy", {random_tensor({3, 4}, gen)},
                   [&](auto p) { return ops::cross_entropy(p[0], targets, 3); }});
  cases.push_back({"squared_error", {random_tensor({3, 2}, gen), random_tensor({3, 2}, gen)},
                   [&](auto p) { return ops::squared_error(p[0], p[1]); }});
  for (const auto& c : cases) {
    CAPTURE(c.name);
    const auto result = grad_check(c.fn, c.params, 1e-4);
    CHECK(result.coordinates > 0);
    CHECK(result.max_relative_error < 1e-4);
  }
}

TEST_CASE("gradient check: linear layer and constant function") {
  std::mt19937_64 gen(7);
  const auto x = random_tensor({5, 4}, gen);
  const auto y = random_tensor({5, 3}, gen);
  const std::vector<Tensor64> params{random_tensor({4, 3}, gen), random_tensor({3}, gen)};
  const auto linear = grad_check(
      [&](auto p) { return ops::squared_error(ops::add_row(ops::matmul(x, p[0]), p[1]), y); },
      params, 1e-6);
  CHECK(linear.max_relative_error < 1e-6);

  const auto constant = grad_check([](auto) { return Tensor64::scalar(2.5); }, params, 1e-6);
  CHECK(constant.max_relative_error == 0.0);
  CHECK(constant.passed);
}

TEST_CASE("gradient check rejects non-deterministic fragments") {
  int calls = 0;
  const std::vector<Tensor64> params{Tensor64({1}, {1.0})};
  CHECK_THROWS(grad_check(
      [&](auto p) { return ops::scale(ops::sum(p[0]), static_cast<double>(++calls)); }, params, 1e-4));
}

TEST_CASE("adam leaves parameters unchanged for zero gradients") {
  AdamState<double> state;
  const std::vector<Tensor64> params{Tensor64({3}, {1, -2, 3})};
  const std::vector<Tensor64> grads{Tensor64::zeros({3})};
  const auto out = adam_step<double>(params, grads, state, 1e-3);
  CHECK(out[0].bitwise_equal(params[0]));
  CHECK(state.step == 1);
}

TEST_CASE("adam first step matches the hand-computed bias-corrected update") {
  AdamState<double> state;
  const std::vector<Tensor64> params{Tensor64({3}, {1, -2, 3})};
  const std::vector<Tensor64> grads{Tensor64({3}, {0.5, -4.0, 1e-3})};
  const double lr = 0.01;
  const auto out = adam_step<double>(params, grads, state, lr);
  for (std::size_t i = 0; i < 3; ++i) {
    // m_hat = g and v_hat = g^2 after one step.
    const double g = grads[0][i];
    const double expected = params[0][i] - lr * g / (std::abs(g) + 1e-8);
    CHECK(out[0][i] == doctest::Approx(expected).epsilon(1e-12));
    CHECK((out[0][i] - params[0][i]) * g < 0);
  }
}

TEST_CASE("adam step magnitude does not grow under a constant gradient") {
  AdamState<double> state;
  std::vector<Tensor64> params{Tensor64({2}, {0.0, 0.0})};
  const std::vector<Tensor64> grads{Tensor64({2}, {0.3, -2.0})};
  auto p1 = adam_step<double>(params, grads, state, 0.1);
  auto p2 = adam_step<double>(p1, grads, state, 0.1);
  for (std::size_t i = 0; i < 2; ++i) {
    const double first = std::abs(p1[0][i] - params[0][i]);
    const double second = std::abs(p2[0][i] - p1[0][i]);
    CHECK(second <= first + 1e-15);
  }
  CHECK(state.step == 2);
}

TEST_CASE("adam rejects misaligned gradients") {
  AdamState<double> state;
  const std::vector<Tensor64> params{Tensor64({3}, {1, 2, 3})};
  const std::vector<Tensor64> grads{Tensor64({2}, {1, 2})};
  CHECK_THROWS_AS(adam_step<double>(params, grads, state, 0.1), DimensionError);
}
