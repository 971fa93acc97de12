#pragma once

#include <filesystem>
#include <optional>

#include "json.hpp"

#include "msf/model.hpp"

namespace msf {

// A checkpoint is a JSON manifest plus a binary blob next to it. The manifest
// records the model config and, per parameter, its name, shape, dtype
// ("float32") and element offset into the blob. The blob is the
// little-endian float32 values of all parameters concatenated in manifest
// order. Parameters are float32-exact in memory, so the round trip is bitwise.
//
// `extra` carries free-form metadata (training step, eval report, ...).
void save_checkpoint(const std::filesystem::path& manifest, const ModelParams& model,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
  ModelParams model;
  nlohmann::json extra;
};

// When `expected` is given and its parameter shapes differ from the stored
// model, throws ConfigError listing every differing parameter.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& manifest,
                                 const std::optional<ModelConfig>& expected = std::nullopt);

// Human-readable list of parameter shape differences; empty when compatible.
std::string parameter_shape_diff(const ModelConfig& a, const ModelConfig& b);

}  // namespace msf
