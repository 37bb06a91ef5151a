#pragma once

#include "json.hpp"
#include "ticl/model/model.hpp"
#include "ticl/train/trainer.hpp"

// JSON mapping for the configuration structs. Absent keys keep their
// defaults; unknown keys raise ConfigError.
namespace ticl::model {
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
}  // namespace ticl::model

namespace ticl::train {
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
}  // namespace ticl::train
