#pragma once

// Little-endian primitives for the binary file formats.

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "rmsnet/errors.hpp"

namespace rmsnet::io {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    const std::array<char, 4> b = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                   static_cast<char>((v >> 16) & 0xff),
                                   static_cast<char>((v >> 24) & 0xff)};
    os.write(b.data(), 4);
}

inline void write_f32(std::ostream& os, float v) { write_u32(os, std::bit_cast<std::uint32_t>(v)); }

inline void write_f64(std::ostream& os, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    write_u32(os, static_cast<std::uint32_t>(bits & 0xffffffffu));
    write_u32(os, static_cast<std::uint32_t>(bits >> 32));
}

inline void write_floats(std::ostream& os, const float* data, std::size_t count) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
    } else {
        for (std::size_t i = 0; i < count; ++i) write_f32(os, data[i]);
    }
}

inline void read_exact(std::istream& is, char* dst, std::size_t n, const std::string& what) {
    is.read(dst, static_cast<std::streamsize>(n));
    RMSNET_REQUIRE(is.gcount() == static_cast<std::streamsize>(n), Format, what,
                   ": truncated file");
}

inline std::uint32_t read_u32(std::istream& is, const std::string& what) {
    std::array<unsigned char, 4> b{};
    read_exact(is, reinterpret_cast<char*>(b.data()), 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline float read_f32(std::istream& is, const std::string& what) {
    return std::bit_cast<float>(read_u32(is, what));
}

inline double read_f64(std::istream& is, const std::string& what) {
    const std::uint64_t lo = read_u32(is, what);
    const std::uint64_t hi = read_u32(is, what);
    return std::bit_cast<double>(lo | (hi << 32));
}

inline void read_floats(std::istream& is, float* data, std::size_t count, const std::string& what) {
    read_exact(is, reinterpret_cast<char*>(data), count * 4, what);
    if constexpr (std::endian::native != std::endian::little) {
        for (std::size_t i = 0; i < count; ++i) {
            auto bits = std::bit_cast<std::uint32_t>(data[i]);
            data[i] = std::bit_cast<float>(__builtin_bswap32(bits));
        }
    }
}

inline void expect_magic(std::istream& is, std::string_view magic, const std::string& what) {
    std::array<char, 4> b{};
    read_exact(is, b.data(), 4, what);
    RMSNET_REQUIRE(std::string_view(b.data(), 4) == magic, Format, what, ": bad magic, expected '",
                   magic, "'");
}

} // namespace rmsnet::io
