#include "ticl/core/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace ticl::core::ops {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMatrix<T>>;

template <typename T>
using BackwardFn = typename Tape<T>::BackwardFn;

[[noreturn]] void shape_error(OpKind kind, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op_name(kind)) + ": incompatible shapes " + shape_string(a) +
                       " and " + shape_string(b));
}

void require_rank2(OpKind kind, const Shape& s) {
  if (s.size() != 2) {
    throw DimensionError(std::string(op_name(kind)) + ": expected a matrix, got shape " +
                         shape_string(s));
  }
}

template <typename T>
void check_finite(OpKind kind, const std::vector<T>& values) {
  for (const T v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op_name(kind)) + " produced a non-finite value");
    }
  }
}

template <typename T>
Tensor<T> finish(OpKind kind, std::vector<const Tensor<T>*> inputs, Shape shape,
                 std::vector<T> values, BackwardFn<T> backward) {
  check_finite(kind, values);
  Tensor<T> out(std::move(shape), std::move(values));
  const std::span<const Tensor<T>* const> in(inputs.data(), inputs.size());
  Tape<T>* tape = common_tape<T>(in);
  if (tape == nullptr) return out;
  return tape->record(kind, in, std::move(out), std::move(backward));
}

template <typename T>
ConstMap<T> as_matrix(const Tensor<T>& t) {
  return ConstMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
ConstMap<T> as_matrix(std::span<const T> v, std::size_t rows, std::size_t cols) {
  return ConstMap<T>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
MutMap<T> as_matrix(std::span<T> v, std::size_t rows, std::size_t cols) {
  return MutMap<T>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(OpKind::kMatmul, a.shape());
  require_rank2(OpKind::kMatmul, b.shape());
  if (a.cols() != b.rows()) shape_error(OpKind::kMatmul, a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<T> out(m * n);
  as_matrix(std::span<T>(out), m, n).noalias() = as_matrix(a) * as_matrix(b);
  auto fn = [a = a.detached(), b = b.detached(), m, k, n](std::span<const T> g,
                                                          GradientSink<T>& sink) {
    const auto grad = as_matrix(g, m, n);
    if (auto da = sink.input(0); !da.empty()) {
      as_matrix(da, m, k).noalias() += grad * as_matrix(b).transpose();
    }
    if (auto db = sink.input(1); !db.empty()) {
      as_matrix(db, k, n).noalias() += as_matrix(a).transpose() * grad;
    }
  };
  return finish<T>(OpKind::kMatmul, {&a, &b}, {m, n}, std::move(out), fn);
}

template <typename T>
Tensor<T> matmul_transposed(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(OpKind::kMatmul, a.shape());
  require_rank2(OpKind::kMatmul, b.shape());
  if (a.cols() != b.cols()) shape_error(OpKind::kMatmul, a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<T> out(m * n);
  as_matrix(std::span<T>(out), m, n).noalias() = as_matrix(a) * as_matrix(b).transpose();
  auto fn = [a = a.detached(), b = b.detached(), m, k, n](std::span<const T> g,
                                                          GradientSink<T>& sink) {
    const auto grad = as_matrix(g, m, n);
    if (auto da = sink.input(0); !da.empty()) {
      as_matrix(da, m, k).noalias() += grad * as_matrix(b);
    }
    if (auto db = sink.input(1); !db.empty()) {
      as_matrix(db, n, k).noalias() += grad.transpose() * as_matrix(a);
    }
  };
  return finish<T>(OpKind::kMatmul, {&a, &b}, {m, n}, std::move(out), fn);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_error(OpKind::kAdd, a.shape(), b.shape());
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  auto fn = [](std::span<const T> g, GradientSink<T>& sink) {
    for (std::size_t slot = 0; slot < 2; ++slot) {
      if (auto d = sink.input(slot); !d.empty()) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
    }
  };
  return finish<T>(OpKind::kAdd, {&a, &b}, a.shape(), std::move(out), fn);
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& row) {
  require_rank2(OpKind::kAddRow, a.shape());
  if (row.rank() != 1 || row.size() != a.cols()) shape_error(OpKind::kAddRow, a.shape(), row.shape());
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(a.size());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = a[r * n + c] + row[c];
  }
  auto fn = [m, n](std::span<const T> g, GradientSink<T>& sink) {
    if (auto da = sink.input(0); !da.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
    if (auto dr = sink.input(1); !dr.empty()) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) dr[c] += g[r * n + c];
      }
    }
  };
  return finish<T>(OpKind::kAddRow, {&a, &row}, a.shape(), std::move(out), fn);
}

template <typename T>
Tensor<T> mul_row(const Tensor<T>& a, const Tensor<T>& row) {
  require_rank2(OpKind::kMulRow, a.shape());
  if (row.rank() != 1 || row.size() != a.cols()) shape_error(OpKind::kMulRow, a.shape(), row.shape());
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(a.size());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = a[r * n + c] * row[c];
  }
  auto fn = [a = a.detached(), row = row.detached(), m, n](std::span<const T> g,
                                                           GradientSink<T>& sink) {
    if (auto da = sink.input(0); !da.empty()) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) da[r * n + c] += g[r * n + c] * row[c];
      }
    }
    if (auto dr = sink.input(1); !dr.empty()) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) dr[c] += g[r * n + c] * a[r * n + c];
      }
    }
  };
  return finish<T>(OpKind::kMulRow, {&a, &row}, a.shape(), std::move(out), fn);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  auto fn = [factor](std::span<const T> g, GradientSink<T>& sink) {
    if (auto d = sink.input(0); !d.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor;
    }
  };
  return finish<T>(OpKind::kScale, {&a}, a.shape(), std::move(out), fn);
}

namespace {

template <typename T>
Tensor<T> softmax_impl(const Tensor<T>& a, std::span<const std::uint8_t> allowed) {
  if (a.rank() == 0) throw DimensionError("softmax-lastdim: scalar input");
  if (!allowed.empty() && allowed.size() != a.size()) {
    throw DimensionError("softmax-lastdim: mask has " + std::to_string(allowed.size()) +
                         " entries for shape " + shape_string(a.shape()));
  }
  const std::size_t n = a.shape().back();
  const std::size_t rows = n == 0 ? 0 : a.size() / n;
  std::vector<T> out(a.size(), T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * n;
    T peak = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < n; ++c) {
      if (allowed.empty() || allowed[base + c]) peak = std::max(peak, a[base + c]);
    }
    if (!std::isfinite(peak)) {
      throw NumericError("softmax-lastdim: row " + std::to_string(r) + " has no allowed entry");
    }
    T total = 0;
    for (std::size_t c = 0; c < n; ++c) {
      if (allowed.empty() || allowed[base + c]) {
        out[base + c] = std::exp(a[base + c] - peak);
        total += out[base + c];
      }
    }
    for (std::size_t c = 0; c < n; ++c) out[base + c] /= total;
  }
  check_finite(OpKind::kSoftmax, out);
  Tensor<T> y(a.shape(), std::move(out));
  auto fn = [y, n, rows](std::span<const T> g, GradientSink<T>& sink) {
    auto d = sink.input(0);
    if (d.empty()) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * n;
      T dot = 0;
      for (std::size_t c = 0; c < n; ++c) dot += g[base + c] * y[base + c];
      for (std::size_t c = 0; c < n; ++c) d[base + c] += y[base + c] * (g[base + c] - dot);
    }
  };
  std::vector<T> values(y.values().begin(), y.values().end());
  return finish<T>(OpKind::kSoftmax, {&a}, a.shape(), std::move(values), fn);
}

}  // namespace

template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
  return softmax_impl(a, {});
}

template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& a, std::span<const std::uint8_t> allowed) {
  if (allowed.size() != a.size()) {
    throw DimensionError("softmax-lastdim: mask has " + std::to_string(allowed.size()) +
                         " entries for shape " + shape_string(a.shape()));
  }
  return softmax_impl(a, allowed);
}

template <typename T>
Tensor<T> layernorm(const Tensor<T>& a, double eps) {
  if (a.rank() == 0 || a.shape().back() == 0) {
    throw DimensionError("layernorm-lastdim: empty last dimension in " + shape_string(a.shape()));
  }
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.size() / n;
  std::vector<T> out(a.size());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * n;
    T mu = 0;
    for (std::size_t c = 0; c < n; ++c) mu += a[base + c];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const T d = a[base + c] - mu;
      var += d * d;
    }
    var /= static_cast<T>(n);
    const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
    inv_std[r] = is;
    for (std::size_t c = 0; c < n; ++c) out[base + c] = (a[base + c] - mu) * is;
  }
  Tensor<T> y(a.shape(), out);
  auto fn = [y, inv_std = std::move(inv_std), n, rows](std::span<const T> g,
                                                       GradientSink<T>& sink) {
    auto d = sink.input(0);
    if (d.empty()) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * n;
      T g_mean = 0, gy_mean = 0;
      for (std::size_t c = 0; c < n; ++c) {
        g_mean += g[base + c];
        gy_mean += g[base + c] * y[base + c];
      }
      g_mean /= static_cast<T>(n);
      gy_mean /= static_cast<T>(n);
      for (std::size_t c = 0; c < n; ++c) {
        d[base + c] += inv_std[r] * (g[base + c] - g_mean - y[base + c] * gy_mean);
      }
    }
  };
  return finish<T>(OpKind::kLayerNorm, {&a}, a.shape(), std::move(out), fn);
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T kInvSqrt2 = static_cast<T>(0.70710678118654752440);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a[i] * T(0.5) * (T(1) + std::erf(a[i] * kInvSqrt2));
  }
  auto fn = [a = a.detached()](std::span<const T> g, GradientSink<T>& sink) {
    auto d = sink.input(0);
    if (d.empty()) return;
    constexpr T kInvSqrt2Pi = static_cast<T>(0.39894228040143267794);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T x = a[i];
      const T cdf = T(0.5) * (T(1) + std::erf(x * kInvSqrt2));
      const T pdf = kInvSqrt2Pi * std::exp(T(-0.5) * x * x);
      d[i] += g[i] * (cdf + x * pdf);
    }
  };
  return finish<T>(OpKind::kGelu, {&a}, a.shape(), std::move(out), fn);
}

template <typename T>
Tensor<T> embed(const Tensor<T>& table, std::span<const std::size_t> indices) {
  require_rank2(OpKind::kEmbed, table.shape());
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<T> out(indices.size() * d);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= vocab) {
      throw DimensionError("embed-lookup: index " + std::to_string(indices[i]) +
                           " outside table of shape " + shape_string(table.shape()));
    }
    std::copy_n(table.data() + indices[i] * d, d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  auto fn = [idx = std::vector<std::size_t>(indices.begin(), indices.end()), d](
                std::span<const T> g, GradientSink<T>& sink) {
    auto dt = sink.input(0);
    if (dt.empty()) return;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t c = 0; c < d; ++c) dt[idx[i] * d + c] += g[i * d + c];
    }
  };
  return finish<T>(OpKind::kEmbed, {&table}, {indices.size(), d}, std::move(out), fn);
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  if (axis > 1) throw DimensionError("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_rank2(OpKind::kConcat, p.shape());
  const std::size_t other = parts[0].dim(1 - axis);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dim(1 - axis) != other) shape_error(OpKind::kConcat, parts[0].shape(), p.shape());
    total += p.dim(axis);
  }
  const std::size_t rows = axis == 0 ? total : other;
  const std::size_t cols = axis == 0 ? other : total;
  std::vector<T> out(rows * cols);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    if (axis == 0) {
      std::copy(p.values().begin(), p.values().end(),
                out.begin() + static_cast<std::ptrdiff_t>(offset * cols));
    } else {
      const std::size_t w = p.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(p.data() + r * w, w, out.begin() + static_cast<std::ptrdiff_t>(r * cols + offset));
      }
    }
    offset += p.dim(axis);
  }
  std::vector<Shape> shapes;
  std::vector<const Tensor<T>*> inputs;
  for (const auto& p : parts) {
    shapes.push_back(p.shape());
    inputs.push_back(&p);
  }
  auto fn = [shapes, offsets, axis, cols](std::span<const T> g, GradientSink<T>& sink) {
    for (std::size_t s = 0; s < shapes.size(); ++s) {
      auto d = sink.input(s);
      if (d.empty()) continue;
      const std::size_t pr = shapes[s][0], pc = shapes[s][1];
      for (std::size_t r = 0; r < pr; ++r) {
        for (std::size_t c = 0; c < pc; ++c) {
          const std::size_t src = axis == 0 ? (offsets[s] + r) * cols + c : r * cols + offsets[s] + c;
          d[r * pc + c] += g[src];
        }
      }
    }
  };
  return finish<T>(OpKind::kConcat, std::move(inputs), {rows, cols}, std::move(out), fn);
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end) {
  require_rank2(OpKind::kSlice, a.shape());
  if (axis > 1 || begin > end || end > a.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") on axis " + std::to_string(axis) + " of shape " +
                         shape_string(a.shape()));
  }
  const std::size_t rows = a.rows(), cols = a.cols();
  const std::size_t out_rows = axis == 0 ? end - begin : rows;
  const std::size_t out_cols = axis == 0 ? cols : end - begin;
  std::vector<T> out(out_rows * out_cols);
  for (std::size_t r = 0; r < out_rows; ++r) {
    const std::size_t src_row = axis == 0 ? begin + r : r;
    const std::size_t src_col = axis == 0 ? 0 : begin;
    std::copy_n(a.data() + src_row * cols + src_col, out_cols,
                out.begin() + static_cast<std::ptrdiff_t>(r * out_cols));
  }
  auto fn = [axis, begin, cols, out_rows, out_cols](std::span<const T> g, GradientSink<T>& sink) {
    auto d = sink.input(0);
    if (d.empty()) return;
    for (std::size_t r = 0; r < out_rows; ++r) {
      const std::size_t dst_row = axis == 0 ? begin + r : r;
      const std::size_t dst_col = axis == 0 ? 0 : begin;
      for (std::size_t c = 0; c < out_cols; ++c) d[dst_row * cols + dst_col + c] += g[r * out_cols + c];
    }
  };
  return finish<T>(OpKind::kSlice, {&a}, {out_rows, out_cols}, std::move(out), fn);
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.size() == 0) throw DimensionError("mean: empty tensor");
  T total = 0;
  for (const T v : a.values()) total += v;
  const T n = static_cast<T>(a.size());
  auto fn = [n](std::span<const T> g, GradientSink<T>& sink) {
    auto d = sink.input(0);
    for (auto& v : d) v += g[0] / n;
  };
  return finish<T>(OpKind::kMean, {&a}, {}, {total / n}, fn);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (const T v : a.values()) total += v;
  auto fn = [](std::span<const T> g, GradientSink<T>& sink) {
    auto d = sink.input(0);
    for (auto& v : d) v += g[0];
  };
  return finish<T>(OpKind::kSum, {&a}, {}, {total}, fn);
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> targets,
                        std::size_t active_classes) {
  require_rank2(OpKind::kCrossEntropy, logits.shape());
  const std::size_t n = logits.rows(), classes = logits.cols();
  const std::size_t active = active_classes == 0 ? classes : active_classes;
  if (targets.size() != n || n == 0 || active > classes) {
    throw DimensionError("cross-entropy: " + std::to_string(targets.size()) + " targets, " +
                         std::to_string(active) + " active classes for logits " +
                         shape_string(logits.shape()));
  }
  std::vector<T> probs(n * active);
  T total = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (targets[r] >= active) {
      throw DimensionError("cross-entropy: target " + std::to_string(targets[r]) +
                           " outside the " + std::to_string(active) + " active classes");
    }
    const T* row = logits.data() + r * classes;
    const T peak = *std::max_element(row, row + active);
    T z = 0;
    for (std::size_t c = 0; c < active; ++c) z += std::exp(row[c] - peak);
    const T log_z = peak + std::log(z);
    total += log_z - row[targets[r]];
    for (std::size_t c = 0; c < active; ++c) probs[r * active + c] = std::exp(row[c] - log_z);
  }
  auto fn = [probs = std::move(probs), idx = std::vector<std::size_t>(targets.begin(), targets.end()),
             n, classes, active](std::span<const T> g, GradientSink<T>& sink) {
    auto d = sink.input(0);
    if (d.empty()) return;
    const T w = g[0] / static_cast<T>(n);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < active; ++c) {
        const T onehot = c == idx[r] ? T(1) : T(0);
        d[r * classes + c] += w * (probs[r * active + c] - onehot);
      }
    }
  };
  return finish<T>(OpKind::kCrossEntropy, {&logits}, {}, {total / static_cast<T>(n)}, fn);
}

template <typename T>
Tensor<T> squared_error(const Tensor<T>& prediction, const Tensor<T>& target) {
  if (prediction.shape() != target.shape()) {
    shape_error(OpKind::kSquaredError, prediction.shape(), target.shape());
  }
  if (prediction.size() == 0) throw DimensionError("squared-error: empty input");
  T total = 0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const T diff = prediction[i] - target[i];
    total += diff * diff;
  }
  const T n = static_cast<T>(prediction.size());
  auto fn = [p = prediction.detached(), t = target.detached(), n](std::span<const T> g,
                                                                 GradientSink<T>& sink) {
    auto dp = sink.input(0);
    auto dt = sink.input(1);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T v = T(2) * (p[i] - t[i]) / n * g[0];
      if (!dp.empty()) dp[i] += v;
      if (!dt.empty()) dt[i] -= v;
    }
  };
  return finish<T>(OpKind::kSquaredError, {&prediction, &target}, {}, {total / n}, fn);
}

#define TICL_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> matmul_transposed(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> add_row(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul_row(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> softmax(const Tensor<T>&);                                                  \
  template Tensor<T> masked_softmax(const Tensor<T>&, std::span<const std::uint8_t>);            \
  template Tensor<T> layernorm(const Tensor<T>&, double);                                        \
  template Tensor<T> gelu(const Tensor<T>&);                                                     \
  template Tensor<T> embed(const Tensor<T>&, std::span<const std::size_t>);                      \
  template Tensor<T> concat(std::span<const Tensor<T>>, std::size_t);                            \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);             \
  template Tensor<T> mean(const Tensor<T>&);                                                     \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::size_t>, std::size_t); \
  template Tensor<T> squared_error(const Tensor<T>&, const Tensor<T>&);

TICL_INSTANTIATE_OPS(float)
TICL_INSTANTIATE_OPS(double)

#undef TICL_INSTANTIATE_OPS

}  // namespace ticl::core::ops
