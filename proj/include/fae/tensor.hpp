#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "fae/common.hpp"
#include "fae/rng.hpp"

namespace fae {

// Dense float32 tensor with value semantics, row-major (last axis fastest).
// Rank is arbitrary; NN code uses NCHW throughout.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<std::size_t>(count(shape_)), 0.0f);
    }
    Tensor(std::initializer_list<std::int64_t> shape)
        : Tensor(std::vector<std::int64_t>(shape)) {}

    static Tensor full(std::vector<std::int64_t> shape, float value) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = value;
        return t;
    }

    static Tensor randn(std::vector<std::int64_t> shape, Rng& rng, float stddev = 1.0f) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = static_cast<float>(rng.normal() * stddev);
        return t;
    }

    static Tensor rand_uniform(std::vector<std::int64_t> shape, Rng& rng, float lo, float hi) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = static_cast<float>(rng.uniform(lo, hi));
        return t;
    }

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const { return shape_.size(); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    // 4-D accessor (NCHW).
    float& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[idx4(n, c, h, w)];
    }
    float at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[idx4(n, c, h, w)];
    }
    // 3-D accessor.
    float& at(std::int64_t a, std::int64_t b, std::int64_t c) {
        return data_[static_cast<std::size_t>((a * shape_[1] + b) * shape_[2] + c)];
    }
    float at(std::int64_t a, std::int64_t b, std::int64_t c) const {
        return data_[static_cast<std::size_t>((a * shape_[1] + b) * shape_[2] + c)];
    }
    // 2-D accessor.
    float& at(std::int64_t r, std::int64_t c) {
        return data_[static_cast<std::size_t>(r * shape_[1] + c)];
    }
    float at(std::int64_t r, std::int64_t c) const {
        return data_[static_cast<std::size_t>(r * shape_[1] + c)];
    }

    Tensor reshaped(std::vector<std::int64_t> shape) const {
        if (count(shape) != numel()) throw ContractError("reshape: element count mismatch");
        Tensor t = *this;
        t.shape_ = std::move(shape);
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    float min() const;
    float max() const;
    double sum() const;  // accumulated in double
    double mean() const;
    bool all_finite() const;

private:
    static std::int64_t count(const std::vector<std::int64_t>& s) {
        std::int64_t n = 1;
        for (auto d : s) {
            if (d < 0) throw ContractError("negative tensor dimension");
            n *= d;
        }
        return n;
    }
    std::size_t idx4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w);
    }

    std::vector<std::int64_t> shape_;
    std::vector<float> data_;
};

// Bilinear resize of a single-channel 2-D image (half-pixel centers, clamped
// edges); the same kernel serves preprocessing, feature fusion, and anomaly
// map upsampling.
void bilinear_resize_2d(const float* src, std::int64_t sh, std::int64_t sw, float* dst,
                        std::int64_t dh, std::int64_t dw);

// Resizes every channel of a [N, C, H, W] tensor to (oh, ow).
Tensor bilinear_resize_nchw(const Tensor& x, std::int64_t oh, std::int64_t ow);

}  // namespace fae
