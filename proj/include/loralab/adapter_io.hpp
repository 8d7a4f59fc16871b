#pragma once

#include <string>

#include <json.hpp>

#include "loralab/model.hpp"

namespace loralab {

// Checkpoint container: 8-byte magic, u64 little-endian manifest length, a
// JSON manifest (version, config echo, tensor names/shapes, provenance), then
// one raw row-major little-endian float64 blob in manifest order. Round-trips
// are bit-exact.

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct AdapterCheckpoint {
    ModelConfig config;
    std::string seed_provenance;
    AdapterSet adapters;
};

void save_adapters(const Model& model, const std::string& path,
                   const std::string& seed_provenance = "");

AdapterCheckpoint load_adapters(const std::string& path);

// Installs checkpoint adapters into the model after checking the manifest
// config against the model config; mismatches raise a compat error listing
// every differing field.
void attach_adapters(Model& model, const AdapterCheckpoint& checkpoint);

// Full frozen-base dump, used to cache the pretrained base across runs.
void save_base(const Model& model, const std::string& path);

// Returns a model with adapters sized per config (zero factors), like
// build_model without the weight draw.
Model load_base(const std::string& path);

}  // namespace loralab
