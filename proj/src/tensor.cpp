#include "fae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fae {

float Tensor::min() const {
    if (data_.empty()) throw ContractError("min of empty tensor");
    return *std::min_element(data_.begin(), data_.end());
}

float Tensor::max() const {
    if (data_.empty()) throw ContractError("max of empty tensor");
    return *std::max_element(data_.begin(), data_.end());
}

double Tensor::sum() const {
    double s = 0.0;
    for (float v : data_) s += v;
    return s;
}

double Tensor::mean() const {
    if (data_.empty()) throw ContractError("mean of empty tensor");
    return sum() / static_cast<double>(data_.size());
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void bilinear_resize_2d(const float* src, std::int64_t sh, std::int64_t sw, float* dst,
                        std::int64_t dh, std::int64_t dw) {
    const double sy = static_cast<double>(sh) / static_cast<double>(dh);
    const double sx = static_cast<double>(sw) / static_cast<double>(dw);
    for (std::int64_t oy = 0; oy < dh; ++oy) {
        double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
        std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
        double wy = fy - static_cast<double>(y0);
        std::int64_t y0c = std::clamp<std::int64_t>(y0, 0, sh - 1);
        std::int64_t y1c = std::clamp<std::int64_t>(y0 + 1, 0, sh - 1);
        for (std::int64_t ox = 0; ox < dw; ++ox) {
            double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
            std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
            double wx = fx - static_cast<double>(x0);
            std::int64_t x0c = std::clamp<std::int64_t>(x0, 0, sw - 1);
            std::int64_t x1c = std::clamp<std::int64_t>(x0 + 1, 0, sw - 1);
            double top = (1.0 - wx) * src[y0c * sw + x0c] + wx * src[y0c * sw + x1c];
            double bot = (1.0 - wx) * src[y1c * sw + x0c] + wx * src[y1c * sw + x1c];
            dst[oy * dw + ox] = static_cast<float>((1.0 - wy) * top + wy * bot);
        }
    }
}

Tensor bilinear_resize_nchw(const Tensor& x, std::int64_t oh, std::int64_t ow) {
    if (x.rank() != 4) throw ContractError("bilinear_resize_nchw expects rank-4 input");
    const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h == oh && w == ow) return x;
    Tensor out({n, c, oh, ow});
    for (std::int64_t i = 0; i < n * c; ++i) {
        bilinear_resize_2d(x.data() + i * h * w, h, w, out.data() + i * oh * ow, oh, ow);
    }
    return out;
}

}  // namespace fae
