#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "mmanet/dataset.hpp"
#include "mmanet/network.hpp"
#include "mmanet/training.hpp"

// JSON (de)serialization of every configuration struct. Unknown keys are
// rejected so typos surface as ConfigError; missing keys keep their defaults.
namespace mmanet {

nlohmann::json to_json(const net::ModelConfig& cfg);
net::ModelConfig model_config_from_json(const nlohmann::json& j, net::ModelConfig base = {});

nlohmann::json to_json(const train::StageConfig& cfg);
train::StageConfig stage_config_from_json(const nlohmann::json& j, train::StageConfig base);

nlohmann::json to_json(const train::LossConfig& cfg);
train::LossConfig loss_config_from_json(const nlohmann::json& j, train::LossConfig base = {});

nlohmann::json to_json(const data::SyntheticSceneConfig& cfg);
data::SyntheticSceneConfig scene_config_from_json(const nlohmann::json& j,
                                                  data::SyntheticSceneConfig base = {});

nlohmann::json load_json_file(const std::filesystem::path& path);

}  // namespace mmanet
