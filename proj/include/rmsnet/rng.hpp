#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "rmsnet/kernels.hpp"

namespace rmsnet {

/// Independent generator for a named component ("init", "sampling",
/// "masking", "dropout", ...) of a run seeded with `seed`.
inline Rng substream(std::uint64_t seed, std::string_view name) {
    std::uint64_t h = 1469598103934665603ull; // FNV-1a
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return Rng(seq);
}

} // namespace rmsnet
