#include "ticl/train/config_io.hpp"

#include <set>

#include "ticl/core/errors.hpp"

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw ticl::ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) {
      throw ticl::ConfigError(std::string("unknown ") + what + " key '" + key + "'");
    }
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ticl::ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

namespace ticl::model {

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"embed_dim", c.embed_dim},       {"layers", c.layers},
       {"heads", c.heads},               {"ff_dim", c.ff_dim},
       {"max_features", c.max_features}, {"max_classes", c.max_classes},
       {"dropout", c.dropout}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  reject_unknown(j,
                 {"embed_dim", "layers", "heads", "ff_dim", "max_features", "max_classes", "dropout"},
                 "model");
  read(j, "embed_dim", c.embed_dim);
  read(j, "layers", c.layers);
  read(j, "heads", c.heads);
  read(j, "ff_dim", c.ff_dim);
  read(j, "max_features", c.max_features);
  read(j, "max_classes", c.max_classes);
  read(j, "dropout", c.dropout);
  c.validate();
}

}  // namespace ticl::model

namespace ticl::train {

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"steps", c.steps},
       {"batch", c.batch},
       {"context", c.context},
       {"query", c.query},
       {"budget", c.budget},
       {"peak_lr", c.peak_lr},
       {"warmup_steps", c.warmup_steps},
       {"floor_fraction", c.floor_fraction},
       {"seed", c.seed},
       {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  reject_unknown(j,
                 {"steps", "batch", "context", "query", "budget", "peak_lr", "warmup_steps",
                  "floor_fraction", "seed", "checkpoint_every"},
                 "train");
  read(j, "steps", c.steps);
  if (j.contains("steps") && !j.contains("warmup_steps")) {
    c.warmup_steps = TrainConfig::with_steps(c.steps).warmup_steps;
  }
  read(j, "batch", c.batch);
  read(j, "context", c.context);
  read(j, "query", c.query);
  read(j, "budget", c.budget);
  read(j, "peak_lr", c.peak_lr);
  read(j, "warmup_steps", c.warmup_steps);
  read(j, "floor_fraction", c.floor_fraction);
  read(j, "seed", c.seed);
  read(j, "checkpoint_every", c.checkpoint_every);
  c.validate();
}

}  // namespace ticl::train
