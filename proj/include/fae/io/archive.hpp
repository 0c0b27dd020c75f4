#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fae/tensor.hpp"

namespace fae::io {

// Raw tensor archive: the repo's exchange format for volumes, checkpoints,
// backbone weights, cached features, and anomaly maps.
//
// Layout (all integers little-endian):
//   magic   "FTAR"                      4 bytes
//   version u32                         currently 1
//   count   u32                         number of entries
//   entry*  { name_len u32, name bytes,
//             dtype u32 (0=f32 1=f64 2=i64 3=u8),
//             ndim u32, dims u64[ndim],
//             payload (dtype size * prod(dims)) }
enum class Dtype : std::uint32_t { f32 = 0, f64 = 1, i64 = 2, u8 = 3 };

struct RawEntry {
    Dtype dtype = Dtype::f32;
    std::vector<std::int64_t> shape;
    std::vector<unsigned char> bytes;
};

class TensorArchive {
public:
    void put(const std::string& name, const Tensor& t);
    void put_f64(const std::string& name, const std::vector<double>& v);
    void put_i64(const std::string& name, const std::vector<std::int64_t>& v);
    void put_bytes(const std::string& name, const std::string& blob);

    bool has(const std::string& name) const { return entries_.count(name) > 0; }
    std::vector<std::string> names() const;

    Tensor get(const std::string& name) const;  // f32 entries only
    std::vector<double> get_f64(const std::string& name) const;
    std::vector<std::int64_t> get_i64(const std::string& name) const;
    std::string get_bytes(const std::string& name) const;
    const RawEntry& raw(const std::string& name) const;

    void save(const std::string& path) const;
    static TensorArchive load(const std::string& path);

private:
    std::map<std::string, RawEntry> entries_;
};

}  // namespace fae::io
