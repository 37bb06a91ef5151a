#include "ticl/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ticl/core/errors.hpp"
#include "ticl/core/ops.hpp"
#include "ticl/core/rng.hpp"

namespace ticl::model {

using core::Tensor;
namespace ops = core::ops;

namespace {

// Fixed slots ahead of the per-layer block and the trailing heads.
enum Slot : std::size_t {
  kFeatureW,
  kFeatureB,
  kClassTable,
  kLabelW,
  kLabelB,
  kPrefix,
};
enum LayerSlot : std::size_t {
  kQkv,
  kAttnOut,
  kAttnOutB,
  kFf1,
  kFf1B,
  kFf2,
  kFf2B,
  kPerLayer,
};
constexpr std::size_t kHeadParams = 4;

std::size_t layer_slot(std::size_t layer, LayerSlot slot) {
  return kPrefix + layer * kPerLayer + slot;
}

}  // namespace

void ModelConfig::validate() const {
  if (embed_dim == 0 || layers == 0 || heads == 0 || ff_dim == 0) {
    throw ConfigError("model sizes must be positive");
  }
  if (embed_dim % heads != 0) {
    throw ConfigError("embed dim " + std::to_string(embed_dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (max_features == 0 || max_classes < 2) throw ConfigError("need max_features >= 1 and max_classes >= 2");
  if (dropout != 0.0) throw ConfigError("dropout is not supported");
}

std::vector<ParamSpec> parameter_layout(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.embed_dim;
  std::vector<ParamSpec> out{
      {"feature.w", {c.max_features, d}}, {"feature.b", {d}}, {"label.classes", {c.max_classes, d}},
      {"label.w", {1, d}},                {"label.b", {d}},
  };
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    out.push_back({p + "attn.qkv", {d, 3 * d}});
    out.push_back({p + "attn.out.w", {d, d}});
    out.push_back({p + "attn.out.b", {d}});
    out.push_back({p + "ff1.w", {d, c.ff_dim}});
    out.push_back({p + "ff1.b", {c.ff_dim}});
    out.push_back({p + "ff2.w", {c.ff_dim, d}});
    out.push_back({p + "ff2.b", {d}});
  }
  out.push_back({"head.cls.w", {d, c.max_classes}});
  out.push_back({"head.cls.b", {c.max_classes}});
  out.push_back({"head.reg.w", {d, 1}});
  out.push_back({"head.reg.b", {1}});
  return out;
}

template <typename T>
Weights<T> Weights<T>::init(const ModelConfig& config, std::uint64_t seed) {
  const auto layout = parameter_layout(config);
  Weights w;
  w.config = config;
  core::Rng rng = core::make_stream(seed, 0x1417);
  std::normal_distribution<double> gauss;
  const double residual = 1.0 / std::sqrt(2.0 * static_cast<double>(config.layers));
  for (const auto& spec : layout) {
    std::vector<T> values(core::shape_size(spec.shape), T(0));
    if (spec.shape.size() == 2) {
      double sd = 1.0 / std::sqrt(static_cast<double>(spec.shape[0]));
      if (spec.name == "label.classes" || spec.name == "label.w") sd = 1.0;
      if (spec.name.ends_with("attn.out.w") || spec.name.ends_with("ff2.w")) sd *= residual;
      if (spec.name.starts_with("head.")) sd *= 0.1;
      for (auto& v : values) v = static_cast<T>(gauss(rng) * sd);
    }
    w.params.emplace_back(spec.shape, std::move(values));
  }
  return w;
}

template <typename T>
void Weights<T>::validate() const {
  const auto layout = parameter_layout(config);
  if (params.size() != layout.size()) {
    throw DimensionError("weights hold " + std::to_string(params.size()) + " arrays, layout needs " +
                         std::to_string(layout.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (params[i].shape() != layout[i].shape) {
      throw DimensionError("weight '" + layout[i].name + "' has shape " +
                           core::shape_string(params[i].shape()) + ", expected " +
                           core::shape_string(layout[i].shape));
    }
    for (const T v : params[i].values()) {
      if (!std::isfinite(v)) throw NumericError("weight '" + layout[i].name + "' is not finite");
    }
  }
}

template <typename T>
std::size_t Weights<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

std::vector<std::uint8_t> attention_mask(std::size_t context, std::size_t query) {
  const std::size_t n = context + query;
  std::vector<std::uint8_t> mask(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < context; ++j) mask[i * n + j] = 1;
    if (i >= context) mask[i * n + i] = 1;
  }
  return mask;
}

template <typename T>
Predictions<T> forward(const ModelConfig& config, std::span<const Tensor<T>> params,
                       const tasks::Episode& ep) {
  const std::size_t d = config.embed_dim, f = config.max_features;
  const std::size_t nc = ep.context_size(), nq = ep.query_size(), n = nc + nq;
  const std::size_t expected = kPrefix + config.layers * kPerLayer + kHeadParams;
  if (params.size() != expected) {
    throw DimensionError("forward: " + std::to_string(params.size()) + " parameter arrays, expected " +
                         std::to_string(expected));
  }
  if (ep.max_features != f || ep.context_x.size() != nc * f || ep.query_x.size() != nq * f) {
    throw DimensionError("forward: episode width " + std::to_string(ep.max_features) +
                         " does not match model width " + std::to_string(f));
  }
  if (nc == 0 || nq == 0) throw DimensionError("forward: episode needs context and query rows");

  std::vector<T> x;
  x.reserve(n * f);
  for (const double v : ep.context_x) x.push_back(static_cast<T>(v));
  for (const double v : ep.query_x) x.push_back(static_cast<T>(v));
  auto h = ops::add_row(ops::matmul(Tensor<T>({n, f}, std::move(x)), params[kFeatureW]),
                        params[kFeatureB]);

  Tensor<T> label;
  if (ep.head == tasks::HeadKind::kClassification) {
    if (ep.classes > config.max_classes) {
      throw DimensionError("forward: episode has " + std::to_string(ep.classes) +
                           " classes, model supports " + std::to_string(config.max_classes));
    }
    std::vector<std::size_t> codes;
    for (const double y : ep.context_y) codes.push_back(static_cast<std::size_t>(y));
    label = ops::embed(params[kClassTable], std::span<const std::size_t>(codes));
  } else {
    std::vector<T> y(ep.context_y.begin(), ep.context_y.end());
    label = ops::add_row(ops::matmul(Tensor<T>({nc, 1}, std::move(y)), params[kLabelW]),
                         params[kLabelB]);
  }
  const Tensor<T> label_parts[] = {label, Tensor<T>::zeros({nq, d})};
  h = ops::add(h, ops::concat(std::span<const Tensor<T>>(label_parts), 0));

  const auto mask = attention_mask(nc, nq);
  const std::size_t dh = d / config.heads;
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<Tensor<T>> head_out(config.heads);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const auto qkv = ops::matmul(ops::layernorm(h), params[layer_slot(l, kQkv)]);
    for (std::size_t k = 0; k < config.heads; ++k) {
      const auto q = ops::slice(qkv, 1, k * dh, (k + 1) * dh);
      const auto key = ops::slice(qkv, 1, d + k * dh, d + (k + 1) * dh);
      const auto v = ops::slice(qkv, 1, 2 * d + k * dh, 2 * d + (k + 1) * dh);
      const auto scores = ops::scale(ops::matmul_transposed(q, key), inv_sqrt);
      head_out[k] = ops::matmul(ops::masked_softmax(scores, std::span<const std::uint8_t>(mask)), v);
    }
    const auto attn = config.heads == 1
                          ? head_out[0]
                          : ops::concat(std::span<const Tensor<T>>(head_out), 1);
    h = ops::add(h, ops::add_row(ops::matmul(attn, params[layer_slot(l, kAttnOut)]),
                                 params[layer_slot(l, kAttnOutB)]));
    const auto hidden = ops::gelu(ops::add_row(
        ops::matmul(ops::layernorm(h), params[layer_slot(l, kFf1)]), params[layer_slot(l, kFf1B)]));
    h = ops::add(h, ops::add_row(ops::matmul(hidden, params[layer_slot(l, kFf2)]),
                                 params[layer_slot(l, kFf2B)]));
  }

  const auto z = ops::slice(ops::layernorm(h), 0, nc, n);
  const std::size_t head0 = kPrefix + config.layers * kPerLayer;
  Predictions<T> out;
  out.logits = ops::add_row(ops::matmul(z, params[head0]), params[head0 + 1]);
  out.regression = ops::add_row(ops::matmul(z, params[head0 + 2]), params[head0 + 3]);
  return out;
}

template <typename T>
Tensor<T> loss(const Predictions<T>& p, const tasks::Episode& ep) {
  if (p.logits.rank() != 2 || p.logits.rows() != ep.query_size()) {
    throw DimensionError("loss: predictions cover " + std::to_string(p.logits.rows()) +
                         " queries, episode has " + std::to_string(ep.query_size()));
  }
  if (ep.head == tasks::HeadKind::kClassification) {
    std::vector<std::size_t> codes;
    for (const double y : ep.query_y) codes.push_back(static_cast<std::size_t>(y));
    return ops::cross_entropy(p.logits, std::span<const std::size_t>(codes), ep.classes);
  }
  std::vector<T> y(ep.query_y.begin(), ep.query_y.end());
  return ops::squared_error(p.regression, Tensor<T>({ep.query_size(), 1}, std::move(y)));
}

template <typename T>
std::vector<double> predict_downstream(const Weights<T>& weights, const DownstreamQuery& q) {
  const auto& cfg = weights.config;
  const std::size_t f = q.features;
  if (f == 0 || f > cfg.max_features) {
    throw DimensionError("downstream: " + std::to_string(f) + " features, model supports 1.." +
                         std::to_string(cfg.max_features));
  }
  const std::size_t nc = q.context_y.size();
  if (nc == 0) throw DimensionError("downstream: empty context");
  if (q.context_x.size() != nc * f) {
    throw DimensionError("downstream: context has " + std::to_string(q.context_x.size()) +
                         " cells for " + std::to_string(nc) + " rows of " + std::to_string(f));
  }
  if (q.query_x.size() % f != 0) {
    throw DimensionError("downstream: query feature count does not match the context (" +
                         std::to_string(f) + ")");
  }
  const std::size_t nq = q.query_x.size() / f;
  if (nq == 0) return {};

  tasks::Episode ep;
  ep.head = q.head;
  ep.max_features = cfg.max_features;
  ep.active_features = f;
  std::vector<double> ctx_x(q.context_x.begin(), q.context_x.end());
  tasks::TargetScaler target;
  std::vector<std::size_t> source_of;

  if (q.head == tasks::HeadKind::kClassification) {
    if (q.class_count == 0) throw DimensionError("downstream: class count must be positive");
    for (const double y : q.context_y) {
      if (!(y >= 0 && y < static_cast<double>(q.class_count))) {
        throw DimensionError("downstream: context class " + std::to_string(y) + " outside " +
                             std::to_string(q.class_count) + " classes");
      }
    }
    std::vector<double> distinct(q.context_y.begin(), q.context_y.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() == 1) {
      std::vector<double> probs(nq * q.class_count, 0.0);
      for (std::size_t i = 0; i < nq; ++i) {
        probs[i * q.class_count + static_cast<std::size_t>(distinct[0])] = 1.0;
      }
      return probs;
    }
    const auto remap = tasks::ClassRemap::fit(q.context_y, cfg.max_classes);
    source_of = remap.source_of;
    ep.classes = remap.classes();
    std::vector<double> kept_x;
    for (std::size_t r = 0; r < nc; ++r) {
      const int code = remap.map(q.context_y[r]);
      if (code < 0) continue;
      ep.context_y.push_back(code);
      kept_x.insert(kept_x.end(), ctx_x.begin() + static_cast<std::ptrdiff_t>(r * f),
                    ctx_x.begin() + static_cast<std::ptrdiff_t>((r + 1) * f));
    }
    ctx_x = std::move(kept_x);
  } else {
    target = tasks::TargetScaler::fit(q.context_y);
    for (const double y : q.context_y) ep.context_y.push_back(target.forward(y));
  }

  const std::size_t kept = ep.context_y.size();
  const auto scaler = tasks::FeatureScaler::fit(ctx_x, kept, f, cfg.max_features);
  ep.context_x = scaler.transform(ctx_x, kept);
  ep.query_x = scaler.transform(q.query_x, nq);
  ep.query_y.assign(nq, 0.0);
  const auto pred = forward<T>(cfg, weights.params, ep);

  if (q.head == tasks::HeadKind::kRegression) {
    std::vector<double> out(nq);
    for (std::size_t i = 0; i < nq; ++i) out[i] = target.inverse(pred.regression[i]);
    return out;
  }
  std::vector<double> probs(nq * q.class_count, 0.0);
  const std::size_t m = ep.classes;
  for (std::size_t i = 0; i < nq; ++i) {
    double peak = -INFINITY;
    for (std::size_t c = 0; c < m; ++c) peak = std::max<double>(peak, pred.logits.at(i, c));
    double z = 0;
    for (std::size_t c = 0; c < m; ++c) z += std::exp(static_cast<double>(pred.logits.at(i, c)) - peak);
    for (std::size_t c = 0; c < m; ++c) {
      probs[i * q.class_count + source_of[c]] =
          std::exp(static_cast<double>(pred.logits.at(i, c)) - peak) / z;
    }
  }
  return probs;
}

template struct Weights<float>;
template struct Weights<double>;

#define TICL_INSTANTIATE_MODEL(T)                                                                   \
  template Predictions<T> forward(const ModelConfig&, std::span<const Tensor<T>>,                  \
                                  const tasks::Episode&);                                          \
  template Tensor<T> loss(const Predictions<T>&, const tasks::Episode&);                           \
  template std::vector<double> predict_downstream(const Weights<T>&, const DownstreamQuery&);

TICL_INSTANTIATE_MODEL(float)
TICL_INSTANTIATE_MODEL(double)

#undef TICL_INSTANTIATE_MODEL

}  // namespace ticl::model
