#include "fae/io/png.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "fae/common.hpp"

namespace fae::io {

namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& data) {
    put_u32_be(out, static_cast<std::uint32_t>(data.size()));
    std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    std::uint32_t crc = crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    put_u32_be(out, crc);
}

void write_png(const std::string& path, const std::vector<std::uint8_t>& pixels,
               std::int64_t width, std::int64_t height, int channels) {
    if (width <= 0 || height <= 0 ||
        pixels.size() != static_cast<std::size_t>(width * height * channels))
        throw ContractError("png: pixel buffer does not match dimensions");

    std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

    std::vector<std::uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(width));
    put_u32_be(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(8);                                  // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);              // color type: gray / rgb
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    append_chunk(png, "IHDR", ihdr);

    // Scanlines with filter byte 0.
    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(height) * (stride + 1));
    for (std::int64_t y = 0; y < height; ++y) {
        raw[y * (stride + 1)] = 0;
        std::memcpy(&raw[y * (stride + 1) + 1], &pixels[y * stride], stride);
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> idat(bound);
    if (compress2(idat.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("png: zlib compression failed");
    idat.resize(bound);
    append_chunk(png, "IDAT", idat);
    append_chunk(png, "IEND", {});

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
    if (!os) throw IoError("write failed: " + path);
}

}  // namespace

void write_png_gray8(const std::string& path, const std::vector<std::uint8_t>& pixels,
                     std::int64_t width, std::int64_t height) {
    write_png(path, pixels, width, height, 1);
}

void write_png_rgb8(const std::string& path, const std::vector<std::uint8_t>& pixels,
                    std::int64_t width, std::int64_t height) {
    write_png(path, pixels, width, height, 3);
}

bool read_png_size(const std::string& path, std::int64_t& width, std::int64_t& height) {
    std::ifstream is(path, std::ios::binary);
    if (!is) return false;
    std::uint8_t buf[24];
    is.read(reinterpret_cast<char*>(buf), 24);
    if (!is || buf[1] != 'P' || buf[2] != 'N' || buf[3] != 'G') return false;
    width = (buf[16] << 24) | (buf[17] << 16) | (buf[18] << 8) | buf[19];
    height = (buf[20] << 24) | (buf[21] << 16) | (buf[22] << 8) | buf[23];
    return true;
}

}  // namespace fae::io
