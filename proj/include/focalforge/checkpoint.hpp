#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <string>

#include "focalforge/nn.hpp"
#include "focalforge/tensor.hpp"

namespace focalforge {

/// Checkpoint container: magic "FFCK", u32 version, u64 JSON header length,
/// JSON header (kind, config echo, training step, RNG state, tensor directory
/// with shapes and payload offsets), then raw little-endian f64 tensor data.
struct Checkpoint {
    std::string kind;
    nlohmann::json config;
    long step = 0;
    std::string rng_state;
    std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::string& path, const std::string& kind,
                     const nlohmann::json& config, long step, const std::string& rng_state,
                     const nn::ParamMap& params);

Checkpoint load_checkpoint(const std::string& path);

/// Copies checkpoint tensors into an already-built ParamMap; throws on
/// missing names or shape mismatches.
void apply_checkpoint(const Checkpoint& ckpt, const nn::ParamMap& params);

}  // namespace focalforge
