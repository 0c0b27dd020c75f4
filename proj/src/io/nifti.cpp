#include "fae/io/nifti.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "fae/common.hpp"

namespace fae::io {

namespace {

bool has_gz_magic(const std::vector<unsigned char>& b) {
    return b.size() >= 2 && b[0] == 0x1f && b[1] == 0x8b;
}

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& in) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 16) != Z_OK) throw IoError("zlib init failed");
    std::vector<unsigned char> out;
    out.resize(in.size() * 4 + 1024);
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    std::size_t written = 0;
    int ret = Z_OK;
    while (ret != Z_STREAM_END) {
        if (written == out.size()) out.resize(out.size() * 2);
        zs.next_out = out.data() + written;
        zs.avail_out = static_cast<uInt>(out.size() - written);
        ret = inflate(&zs, Z_NO_FLUSH);
        if (ret != Z_OK && ret != Z_STREAM_END) {
            inflateEnd(&zs);
            throw FormatError("gzip decompression failed");
        }
        written = out.size() - zs.avail_out;
    }
    inflateEnd(&zs);
    out.resize(written);
    return out;
}

template <typename T>
T read_le(const unsigned char* p) {
    T v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

}  // namespace

std::vector<unsigned char> read_file_maybe_gz(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    if (has_gz_magic(bytes)) return gunzip(bytes);
    return bytes;
}

NiftiVolume load_nifti(const std::string& path) {
    std::vector<unsigned char> b = read_file_maybe_gz(path);
    if (b.size() < 352) throw FormatError("file too small for a NIfTI-1 header: " + path);

    const std::int32_t sizeof_hdr = read_le<std::int32_t>(&b[0]);
    if (sizeof_hdr != 348) throw FormatError("not a NIfTI-1 file (sizeof_hdr != 348): " + path);
    if (std::memcmp(&b[344], "n+1", 3) != 0)
        throw FormatError("only single-file NIfTI (magic n+1) is supported: " + path);

    std::int16_t dim[8];
    for (int i = 0; i < 8; ++i) dim[i] = read_le<std::int16_t>(&b[40 + 2 * i]);
    // Trailing size-1 dims (e.g. 4-D files with a single time point) are fine.
    std::int64_t extra = 1;
    for (int i = 4; i <= dim[0] && i < 8; ++i) extra *= dim[i] > 0 ? dim[i] : 1;
    if (dim[0] < 3 || extra != 1) throw FormatError("volume is not 3-D: " + path);

    const std::int16_t datatype = read_le<std::int16_t>(&b[70]);
    const float vox_offset = read_le<float>(&b[108]);
    float scl_slope = read_le<float>(&b[112]);
    const float scl_inter = read_le<float>(&b[116]);
    if (scl_slope == 0.0f) scl_slope = 1.0f;

    NiftiVolume v;
    v.nx = dim[1];
    v.ny = dim[2];
    v.nz = dim[3];
    for (int i = 0; i < 3; ++i) v.pixdim[i] = read_le<float>(&b[76 + 4 * (i + 1)]);
    if (v.nx <= 0 || v.ny <= 0 || v.nz <= 0) throw FormatError("bad dimensions: " + path);

    const std::size_t n = static_cast<std::size_t>(v.nx * v.ny * v.nz);
    const std::size_t off = static_cast<std::size_t>(vox_offset);
    v.voxels.resize(n);

    auto fill = [&](auto tag, std::size_t elem) {
        using T = decltype(tag);
        if (b.size() < off + n * elem) throw FormatError("NIfTI payload truncated: " + path);
        for (std::size_t i = 0; i < n; ++i) {
            T raw = read_le<T>(&b[off + i * elem]);
            v.voxels[i] = static_cast<float>(raw) * scl_slope + scl_inter;
        }
    };

    switch (datatype) {
        case 2: fill(std::uint8_t{}, 1); break;
        case 4: fill(std::int16_t{}, 2); break;
        case 8: fill(std::int32_t{}, 4); break;
        case 16: fill(float{}, 4); break;
        case 64: fill(double{}, 8); break;
        case 256: fill(std::int8_t{}, 1); break;
        case 512: fill(std::uint16_t{}, 2); break;
        default: throw FormatError("unsupported NIfTI datatype " + std::to_string(datatype));
    }
    return v;
}

}  // namespace fae::io
