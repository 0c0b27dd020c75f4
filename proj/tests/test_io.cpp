#include "doctest.h"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "fae/data/pipeline.hpp"
#include "fae/io/archive.hpp"
#include "fae/io/nifti.hpp"
#include "fae/io/png.hpp"
#include "fae/tensor.hpp"

namespace fs = std::filesystem;
using fae::Tensor;

namespace {

fs::path test_dir() {
    const fs::path d = fs::temp_directory_path() / "fae_test_io";
    fs::create_directories(d);
    return d;
}

std::vector<unsigned char> slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(static_cast<bool>(is));
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<unsigned char>& b) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    REQUIRE(static_cast<bool>(os));
    os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

template <typename T>
void poke(std::vector<unsigned char>& b, std::size_t off, T v) {
    std::memcpy(b.data() + off, &v, sizeof v);
}

// Minimal single-file NIfTI-1 image: 348-byte header, 4 filler bytes, payload.
std::vector<unsigned char> make_nifti(std::int16_t nx, std::int16_t ny, std::int16_t nz,
                                      std::int16_t datatype,
                                      const std::vector<unsigned char>& payload,
                                      float slope = 0.0f, float inter = 0.0f,
                                      std::int16_t ndim = 3, std::int16_t dim4 = 1) {
    std::vector<unsigned char> b(352, 0);
    poke<std::int32_t>(b, 0, 348);
    poke<std::int16_t>(b, 40, ndim);
    poke<std::int16_t>(b, 42, nx);
    poke<std::int16_t>(b, 44, ny);
    poke<std::int16_t>(b, 46, nz);
    poke<std::int16_t>(b, 48, dim4);
    poke<std::int16_t>(b, 70, datatype);
    poke<float>(b, 80, 2.0f);   // pixdim[1] (x)
    poke<float>(b, 84, 3.0f);   // pixdim[2] (y)
    poke<float>(b, 88, 4.0f);   // pixdim[3] (z)
    poke<float>(b, 108, 352.0f);
    poke<float>(b, 112, slope);
    poke<float>(b, 116, inter);
    std::memcpy(b.data() + 344, "n+1\0", 4);
    b.insert(b.end(), payload.begin(), payload.end());
    return b;
}

std::vector<unsigned char> gzip_bytes(const std::vector<unsigned char>& in) {
    z_stream zs{};
    REQUIRE(deflateInit2(&zs, Z_BEST_SPEED, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) == Z_OK);
    std::vector<unsigned char> out(deflateBound(&zs, static_cast<uLong>(in.size())) + 64);
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    REQUIRE(deflate(&zs, Z_FINISH) == Z_STREAM_END);
    out.resize(zs.total_out);
    deflateEnd(&zs);
    return out;
}

}  // namespace

TEST_CASE("archive round-trips every entry type exactly") {
    fae::io::TensorArchive ar;
    Tensor t({2, 3});
    for (std::int64_t i = 0; i < 6; ++i)
        t[static_cast<std::size_t>(i)] = static_cast<float>(i) * 0.25f - 1.0f;
    ar.put("weights", t);
    ar.put_f64("losses", {0.5, -1.25, 3.75});
    ar.put_i64("steps", {0, 10, -20});
    ar.put_bytes("id", std::string("volume_07\0x", 11));

    const fs::path p = test_dir() / "roundtrip.bin";
    ar.save(p.string());
    const auto back = fae::io::TensorArchive::load(p.string());

    CHECK(back.names() == std::vector<std::string>{"id", "losses", "steps", "weights"});
    REQUIRE(back.has("weights"));
    const Tensor w = back.get("weights");
    CHECK(w.shape() == t.shape());
    for (std::int64_t i = 0; i < 6; ++i)
        CHECK(w[static_cast<std::size_t>(i)] == t[static_cast<std::size_t>(i)]);
    CHECK(back.get_f64("losses") == std::vector<double>{0.5, -1.25, 3.75});
    CHECK(back.get_i64("steps") == std::vector<std::int64_t>{0, 10, -20});
    CHECK(back.get_bytes("id") == std::string("volume_07\0x", 11));
    CHECK(back.raw("weights").dtype == fae::io::Dtype::f32);
}

TEST_CASE("archive rejects missing names and dtype mismatches") {
    fae::io::TensorArchive ar;
    ar.put_f64("x", {1.0});
    CHECK_THROWS_AS(ar.get("missing"), fae::ContractError);
    CHECK_THROWS_AS(ar.get("x"), fae::FormatError);      // f64 fetched as f32
    CHECK_THROWS_AS(ar.get_i64("x"), fae::FormatError);  // f64 fetched as i64
    CHECK_THROWS_AS(ar.save("/nonexistent_dir_zz/f.bin"), fae::IoError);
    CHECK_THROWS_AS(fae::io::TensorArchive::load((test_dir() / "absent.bin").string()),
                    fae::IoError);
}

TEST_CASE("archive detects corruption") {
    const fs::path good = test_dir() / "good.bin";
    fae::io::TensorArchive ar;
    ar.put("t", Tensor::full({4, 4}, 1.0f));
    ar.save(good.string());

    auto bytes = slurp(good);
    auto bad = bytes;
    bad[0] = 'X';
    const fs::path p1 = test_dir() / "badmagic.bin";
    spit(p1, bad);
    CHECK_THROWS_AS(fae::io::TensorArchive::load(p1.string()), fae::FormatError);

    auto cut = bytes;
    cut.resize(cut.size() - 8);
    const fs::path p2 = test_dir() / "truncated.bin";
    spit(p2, cut);
    CHECK_THROWS_AS(fae::io::TensorArchive::load(p2.string()), fae::FormatError);
}

TEST_CASE("plain and gzip reads return identical bytes") {
    const std::vector<unsigned char> payload = {'h', 'e', 'l', 'l', 'o', 0, 255, 7};
    const fs::path plain = test_dir() / "plain.bin";
    const fs::path gz = test_dir() / "packed.bin.gz";
    spit(plain, payload);
    spit(gz, gzip_bytes(payload));
    CHECK(fae::io::read_file_maybe_gz(plain.string()) == payload);
    CHECK(fae::io::read_file_maybe_gz(gz.string()) == payload);
    CHECK_THROWS_AS(fae::io::read_file_maybe_gz((test_dir() / "nope").string()), fae::IoError);

    // gzip magic followed by garbage must fail loudly, not return junk.
    const fs::path broken = test_dir() / "broken.gz";
    spit(broken, {0x1f, 0x8b, 0x00, 0x11, 0x22});
    CHECK_THROWS_AS(fae::io::read_file_maybe_gz(broken.string()), fae::FormatError);
}

TEST_CASE("volume loader reads float voxels in x-fastest order") {
    const std::int16_t nx = 3, ny = 3, nz = 2;
    std::vector<unsigned char> payload(static_cast<std::size_t>(nx) * ny * nz * 4);
    for (std::size_t i = 0; i < payload.size() / 4; ++i)
        poke<float>(payload, i * 4, static_cast<float>(i) * 0.5f);
    const fs::path p = test_dir() / "vol.nii";
    spit(p, make_nifti(nx, ny, nz, 16, payload));

    const auto v = fae::io::load_nifti(p.string());
    CHECK(v.nx == 3);
    CHECK(v.ny == 3);
    CHECK(v.nz == 2);
    CHECK(v.pixdim[0] == 2.0f);
    CHECK(v.pixdim[2] == 4.0f);
    REQUIRE(v.voxels.size() == 18);
    // (x=1, y=2, z=0) lives at flat index x + nx*(y + ny*z) = 7.
    CHECK(v.voxels[7] == 3.5f);

    // Same file gzipped decodes identically.
    const fs::path pgz = test_dir() / "vol.nii.gz";
    spit(pgz, gzip_bytes(slurp(p)));
    const auto vgz = fae::io::load_nifti(pgz.string());
    CHECK(vgz.voxels == v.voxels);

    // The volume loader transposes into [z, y, x] tensor order.
    const fae::data::Volume vol = fae::data::load_volume(p.string(), fae::data::VolumeFormat::nifti);
    CHECK(vol.voxels.shape() == std::vector<std::int64_t>{2, 3, 3});
    CHECK(vol.voxels.at(0, 2, 1) == 3.5f);
    CHECK(vol.spacing[0] == 4.0);  // z spacing comes from pixdim[3]
    CHECK(vol.spacing[2] == 2.0);
}

TEST_CASE("integer voxels honor slope and intercept scaling") {
    std::vector<unsigned char> payload(4 * 2);
    for (std::size_t i = 0; i < 4; ++i)
        poke<std::int16_t>(payload, i * 2, static_cast<std::int16_t>(i * 100 - 100));
    const fs::path p = test_dir() / "scaled.nii";
    spit(p, make_nifti(2, 2, 1, 4, payload, 0.5f, 10.0f));
    const auto v = fae::io::load_nifti(p.string());
    CHECK(v.voxels == std::vector<float>{-40.0f, 10.0f, 60.0f, 110.0f});

    // uint8 voxels, zero slope treated as identity scale.
    const fs::path p8 = test_dir() / "u8.nii";
    spit(p8, make_nifti(2, 1, 1, 2, {7, 250}));
    CHECK(fae::io::load_nifti(p8.string()).voxels == std::vector<float>{7.0f, 250.0f});

    // double voxels downcast to float.
    std::vector<unsigned char> p64(2 * 8);
    poke<double>(p64, 0, 0.125);
    poke<double>(p64, 8, -2.5);
    const fs::path pd = test_dir() / "f64.nii";
    spit(pd, make_nifti(2, 1, 1, 64, p64));
    CHECK(fae::io::load_nifti(pd.string()).voxels == std::vector<float>{0.125f, -2.5f});
}

TEST_CASE("malformed volumes are rejected with format errors") {
    const std::vector<unsigned char> payload(8 * 4, 0);

    auto write_case = [&](const char* name, std::vector<unsigned char> bytes) {
        const fs::path p = test_dir() / name;
        spit(p, bytes);
        return p.string();
    };

    // Wrong header size marker.
    auto b1 = make_nifti(2, 2, 2, 16, payload);
    poke<std::int32_t>(b1, 0, 100);
    CHECK_THROWS_AS(fae::io::load_nifti(write_case("h.nii", b1)), fae::FormatError);

    // Missing n+1 magic.
    auto b2 = make_nifti(2, 2, 2, 16, payload);
    b2[344] = 'x';
    CHECK_THROWS_AS(fae::io::load_nifti(write_case("m.nii", b2)), fae::FormatError);

    // 4-D with a real fourth axis.
    CHECK_THROWS_AS(
        fae::io::load_nifti(write_case("t4.nii", make_nifti(2, 2, 2, 16, payload, 0, 0, 4, 2))),
        fae::FormatError);
    // 4-D with a single time point is accepted.
    CHECK_NOTHROW(
        fae::io::load_nifti(write_case("t1.nii", make_nifti(2, 2, 2, 16, payload, 0, 0, 4, 1))));

    // 2-D image.
    CHECK_THROWS_AS(
        fae::io::load_nifti(write_case("d2.nii", make_nifti(2, 2, 1, 16, payload, 0, 0, 2))),
        fae::FormatError);

    // Unsupported datatype (complex64 = 32).
    CHECK_THROWS_AS(
        fae::io::load_nifti(write_case("c.nii", make_nifti(2, 2, 2, 32, payload))),
        fae::FormatError);

    // Payload shorter than the dims promise.
    CHECK_THROWS_AS(
        fae::io::load_nifti(write_case("short.nii", make_nifti(4, 4, 4, 16, payload))),
        fae::FormatError);

    // Tiny file.
    CHECK_THROWS_AS(fae::io::load_nifti(write_case("tiny.nii", {1, 2, 3})), fae::FormatError);

    // Non-finite voxels pass raw loading but fail the volume contract.
    std::vector<unsigned char> nan_payload(8 * 4);
    for (std::size_t i = 0; i < 8; ++i) poke<float>(nan_payload, i * 4, 1.0f);
    poke<float>(nan_payload, 3 * 4, std::numeric_limits<float>::quiet_NaN());
    const auto nan_path = write_case("nan.nii", make_nifti(2, 2, 2, 16, nan_payload));
    CHECK_NOTHROW(fae::io::load_nifti(nan_path));
    CHECK_THROWS_AS(fae::data::load_volume(nan_path, fae::data::VolumeFormat::nifti),
                    fae::FormatError);
}

TEST_CASE("png writer produces deterministic decodable files") {
    std::vector<std::uint8_t> gray(12 * 5);
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = static_cast<std::uint8_t>(i * 4);
    const fs::path a = test_dir() / "a.png";
    const fs::path b = test_dir() / "b.png";
    fae::io::write_png_gray8(a.string(), gray, 12, 5);
    fae::io::write_png_gray8(b.string(), gray, 12, 5);

    const auto ba = slurp(a);
    CHECK(ba == slurp(b));  // identical input -> identical bytes
    const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    REQUIRE(ba.size() > 8);
    CHECK(std::memcmp(ba.data(), sig, 8) == 0);

    std::int64_t w = 0, h = 0;
    REQUIRE(fae::io::read_png_size(a.string(), w, h));
    CHECK(w == 12);
    CHECK(h == 5);

    std::vector<std::uint8_t> rgb(4 * 3 * 3, 200);
    const fs::path c = test_dir() / "c.png";
    fae::io::write_png_rgb8(c.string(), rgb, 4, 3);
    REQUIRE(fae::io::read_png_size(c.string(), w, h));
    CHECK(w == 4);
    CHECK(h == 3);
}
