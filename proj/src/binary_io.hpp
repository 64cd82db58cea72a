#pragma once

// Private little-endian f32 blob helpers shared by the raster and weight
// file readers. The host is assumed IEEE-754; byte order is handled
// explicitly so files are portable.

#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "hycd/errors.hpp"

namespace hycd::detail {

static_assert(std::numeric_limits<float>::is_iec559, "IEEE-754 floats required");

inline float load_f32_le(const unsigned char* p) {
    std::uint32_t u = static_cast<std::uint32_t>(p[0]) |
                      (static_cast<std::uint32_t>(p[1]) << 8) |
                      (static_cast<std::uint32_t>(p[2]) << 16) |
                      (static_cast<std::uint32_t>(p[3]) << 24);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

inline void store_f32_le(float f, unsigned char* p) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    p[0] = static_cast<unsigned char>(u & 0xFF);
    p[1] = static_cast<unsigned char>((u >> 8) & 0xFF);
    p[2] = static_cast<unsigned char>((u >> 16) & 0xFF);
    p[3] = static_cast<unsigned char>((u >> 24) & 0xFF);
}

std::vector<unsigned char> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const unsigned char* data, std::size_t size);
void write_text_file(const std::string& path, const std::string& text);

} // namespace hycd::detail
