#include "fae/io/archive.hpp"

#include <cstring>
#include <fstream>

#include "fae/common.hpp"

namespace fae::io {

namespace {

constexpr char kMagic[4] = {'F', 'T', 'A', 'R'};
constexpr std::uint32_t kVersion = 1;

std::size_t dtype_size(Dtype d) {
    switch (d) {
        case Dtype::f32: return 4;
        case Dtype::f64: return 8;
        case Dtype::i64: return 8;
        case Dtype::u8: return 1;
    }
    throw FormatError("unknown dtype");
}

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw FormatError("archive truncated");
    return v;
}

std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw FormatError("archive truncated");
    return v;
}

}  // namespace

void TensorArchive::put(const std::string& name, const Tensor& t) {
    RawEntry e;
    e.dtype = Dtype::f32;
    e.shape = t.shape();
    e.bytes.resize(static_cast<std::size_t>(t.numel()) * 4);
    std::memcpy(e.bytes.data(), t.data(), e.bytes.size());
    entries_[name] = std::move(e);
}

void TensorArchive::put_f64(const std::string& name, const std::vector<double>& v) {
    RawEntry e;
    e.dtype = Dtype::f64;
    e.shape = {static_cast<std::int64_t>(v.size())};
    e.bytes.resize(v.size() * 8);
    std::memcpy(e.bytes.data(), v.data(), e.bytes.size());
    entries_[name] = std::move(e);
}

void TensorArchive::put_i64(const std::string& name, const std::vector<std::int64_t>& v) {
    RawEntry e;
    e.dtype = Dtype::i64;
    e.shape = {static_cast<std::int64_t>(v.size())};
    e.bytes.resize(v.size() * 8);
    std::memcpy(e.bytes.data(), v.data(), e.bytes.size());
    entries_[name] = std::move(e);
}

void TensorArchive::put_bytes(const std::string& name, const std::string& blob) {
    RawEntry e;
    e.dtype = Dtype::u8;
    e.shape = {static_cast<std::int64_t>(blob.size())};
    e.bytes.assign(blob.begin(), blob.end());
    entries_[name] = std::move(e);
}

std::vector<std::string> TensorArchive::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
}

const RawEntry& TensorArchive::raw(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("archive entry not found: " + name);
    return it->second;
}

Tensor TensorArchive::get(const std::string& name) const {
    const RawEntry& e = raw(name);
    if (e.dtype != Dtype::f32) throw FormatError("entry is not f32: " + name);
    Tensor t(e.shape);
    std::memcpy(t.data(), e.bytes.data(), e.bytes.size());
    return t;
}

std::vector<double> TensorArchive::get_f64(const std::string& name) const {
    const RawEntry& e = raw(name);
    if (e.dtype != Dtype::f64) throw FormatError("entry is not f64: " + name);
    std::vector<double> v(e.bytes.size() / 8);
    std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
    return v;
}

std::vector<std::int64_t> TensorArchive::get_i64(const std::string& name) const {
    const RawEntry& e = raw(name);
    if (e.dtype != Dtype::i64) throw FormatError("entry is not i64: " + name);
    std::vector<std::int64_t> v(e.bytes.size() / 8);
    std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
    return v;
}

std::string TensorArchive::get_bytes(const std::string& name) const {
    const RawEntry& e = raw(name);
    if (e.dtype != Dtype::u8) throw FormatError("entry is not u8: " + name);
    return std::string(e.bytes.begin(), e.bytes.end());
}

void TensorArchive::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& [name, e] : entries_) {
        write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, static_cast<std::uint32_t>(e.dtype));
        write_u32(os, static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape) write_u64(os, static_cast<std::uint64_t>(d));
        os.write(reinterpret_cast<const char*>(e.bytes.data()),
                 static_cast<std::streamsize>(e.bytes.size()));
    }
    if (!os) throw IoError("write failed: " + path);
}

TensorArchive TensorArchive::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad archive magic: " + path);
    std::uint32_t version = read_u32(is);
    if (version != kVersion) throw FormatError("unsupported archive version");
    std::uint32_t count = read_u32(is);
    TensorArchive a;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t name_len = read_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        RawEntry e;
        std::uint32_t dt = read_u32(is);
        if (dt > 3) throw FormatError("bad dtype in archive");
        e.dtype = static_cast<Dtype>(dt);
        std::uint32_t ndim = read_u32(is);
        std::size_t n = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            auto dim = read_u64(is);
            e.shape.push_back(static_cast<std::int64_t>(dim));
            n *= dim;
        }
        e.bytes.resize(n * dtype_size(e.dtype));
        is.read(reinterpret_cast<char*>(e.bytes.data()),
                static_cast<std::streamsize>(e.bytes.size()));
        if (!is) throw FormatError("archive truncated: " + path);
        a.entries_[name] = std::move(e);
    }
    return a;
}

}  // namespace fae::io
