#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fae::io {

// Tiny PNG encoder (8-bit grayscale or RGB, filter 0, fixed zlib level) —
// output bytes are deterministic for identical input.
void write_png_gray8(const std::string& path, const std::vector<std::uint8_t>& pixels,
                     std::int64_t width, std::int64_t height);

void write_png_rgb8(const std::string& path, const std::vector<std::uint8_t>& pixels,
                    std::int64_t width, std::int64_t height);

// Reads back width/height from a PNG header (test support).
bool read_png_size(const std::string& path, std::int64_t& width, std::int64_t& height);

}  // namespace fae::io
