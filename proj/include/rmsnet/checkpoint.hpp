#pragma once

// Checkpoint file: "RMSN", u32 version, config block, u32 tensor count, then
// each tensor as u32 rows, u32 cols and little-endian float32 values, in
// kParamNames order.

#include <filesystem>

#include "rmsnet/model.hpp"

namespace rmsnet {

struct Checkpoint {
    RmsNetConfig config;
    RmsNetParams<float> params;
};

void save_checkpoint(const RmsNetConfig& config, const RmsNetParams<float>& params,
                     const std::filesystem::path& path);

Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace rmsnet
