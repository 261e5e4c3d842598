#pragma once

#include <string>

#include <json.hpp>

#include "csnn/model.hpp"

namespace csnn {

/// Config <-> JSON, using the field names documented in the README.
nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Versioned JSON checkpoint: {"format": "csnn-checkpoint", "version": 1,
/// "config": {...}, "params": {name: {rows, cols, data (row-major)}}}.
void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ParameterStore& store);
struct Checkpoint {
    ModelConfig config;
    ParameterStore params;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace csnn
