#include "fae/anomaly/sink.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "fae/common.hpp"
#include "fae/rng.hpp"

namespace fae::anomaly {

namespace {

// 1-D squared distance transform (lower envelope of parabolas).
void edt_1d(const double* f, double* d, std::int64_t n, std::vector<std::int64_t>& v,
            std::vector<double>& z) {
    v.resize(static_cast<std::size_t>(n));
    z.resize(static_cast<std::size_t>(n) + 1);
    std::int64_t k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (std::int64_t q = 1; q < n; ++q) {
        double s = 0.0;
        while (true) {
            const std::int64_t p = v[static_cast<std::size_t>(k)];
            s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
                (2.0 * static_cast<double>(q - p));
            if (s > z[static_cast<std::size_t>(k)]) break;
            --k;
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = s;
        z[static_cast<std::size_t>(k) + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (std::int64_t q = 0; q < n; ++q) {
        while (z[static_cast<std::size_t>(k) + 1] < static_cast<double>(q)) ++k;
        const std::int64_t p = v[static_cast<std::size_t>(k)];
        const double dq = static_cast<double>(q - p);
        d[q] = dq * dq + f[p];
    }
}

}  // namespace

std::vector<double> squared_distance_to_background(const std::vector<std::uint8_t>& foreground,
                                                   std::int64_t h, std::int64_t w) {
    if (static_cast<std::int64_t>(foreground.size()) != h * w)
        throw ContractError("distance transform: size mismatch");
    const double inf = static_cast<double>(h * h + w * w + 1);
    std::vector<double> dist(static_cast<std::size_t>(h * w));
    for (std::int64_t i = 0; i < h * w; ++i)
        dist[static_cast<std::size_t>(i)] = foreground[static_cast<std::size_t>(i)] ? inf : 0.0;

    std::vector<double> line(static_cast<std::size_t>(std::max(h, w)));
    std::vector<double> out(static_cast<std::size_t>(std::max(h, w)));
    std::vector<std::int64_t> v;
    std::vector<double> z;
    for (std::int64_t x = 0; x < w; ++x) {  // columns first
        for (std::int64_t y = 0; y < h; ++y) line[static_cast<std::size_t>(y)] = dist[static_cast<std::size_t>(y * w + x)];
        edt_1d(line.data(), out.data(), h, v, z);
        for (std::int64_t y = 0; y < h; ++y) dist[static_cast<std::size_t>(y * w + x)] = out[static_cast<std::size_t>(y)];
    }
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) line[static_cast<std::size_t>(x)] = dist[static_cast<std::size_t>(y * w + x)];
        edt_1d(line.data(), out.data(), w, v, z);
        for (std::int64_t x = 0; x < w; ++x) dist[static_cast<std::size_t>(y * w + x)] = out[static_cast<std::size_t>(x)];
    }
    // The image border also bounds placement: clip by the distance to the
    // nearest out-of-image pixel center.
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const double b = static_cast<double>(std::min(std::min(y + 1, x + 1),
                                                          std::min(h - y, w - x)));
            double& dv = dist[static_cast<std::size_t>(y * w + x)];
            dv = std::min(dv, b * b);
        }
    }
    return dist;
}

SinkSpec sample_sink_spec(const Tensor& image, const Tensor& foreground, std::uint64_t rng_seed) {
    if (image.rank() != 2 || foreground.rank() != 2 || image.shape() != foreground.shape())
        throw ContractError("sink sampling: image and foreground must be matching 2-D grids");
    const std::int64_t h = image.shape()[0];
    const std::int64_t w = image.shape()[1];

    std::vector<std::uint8_t> fg(static_cast<std::size_t>(h * w));
    for (std::int64_t i = 0; i < h * w; ++i)
        fg[static_cast<std::size_t>(i)] = foreground[static_cast<std::size_t>(i)] > 0.5f ? 1 : 0;
    const std::vector<double> dsq = squared_distance_to_background(fg, h, w);

    double max_dsq = 0.0;
    for (double v : dsq) max_dsq = std::max(max_dsq, v);
    const double fit = std::sqrt(max_dsq);
    if (fit <= kMinRadius)
        throw PlacementError("sink sampling: no room for the minimum radius");

    Rng rng(rng_seed);
    const double hi = std::min(kMaxRadius, fit);
    SinkSpec spec;
    spec.seed = rng_seed;
    spec.radius = rng.uniform(kMinRadius, hi);
    spec.strength = rng.uniform(kMinStrength, kMaxStrength);

    const double r2 = spec.radius * spec.radius;
    std::vector<std::int64_t> candidates;
    for (std::int64_t i = 0; i < h * w; ++i)
        if (dsq[static_cast<std::size_t>(i)] > r2) candidates.push_back(i);
    if (candidates.empty())
        throw PlacementError("sink sampling: no center admits the sampled radius");
    const std::int64_t pick =
        candidates[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(candidates.size())))];
    spec.row = static_cast<double>(pick / w);
    spec.col = static_cast<double>(pick % w);
    return spec;
}

void apply_sink(const Tensor& image, const SinkSpec& spec, Tensor& deformed, Tensor& mask) {
    if (image.rank() != 2) throw ContractError("apply sink: image must be 2-D");
    if (!(spec.strength > 0.0 && spec.strength <= 1.0))
        throw ContractError("apply sink: strength must lie in (0, 1]");
    if (spec.radius <= 0.0) throw ContractError("apply sink: radius must be positive");
    const std::int64_t h = image.shape()[0];
    const std::int64_t w = image.shape()[1];
    // Same rule as the placement sampler: every pixel of the disk must be
    // strictly nearer to the center than any out-of-image pixel.
    if (spec.row + 1.0 <= spec.radius || static_cast<double>(h) - spec.row <= spec.radius ||
        spec.col + 1.0 <= spec.radius || static_cast<double>(w) - spec.col <= spec.radius)
        throw RangeError("apply sink: disk exits image bounds");

    deformed = image;
    mask = Tensor::full({h, w}, 0.0f);
    const float* src = image.data();
    float* dst = deformed.data();
    float* msk = mask.data();

    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(spec.row - spec.radius));
    const std::int64_t y1 = static_cast<std::int64_t>(std::ceil(spec.row + spec.radius));
    const std::int64_t x0 = static_cast<std::int64_t>(std::floor(spec.col - spec.radius));
    const std::int64_t x1 = static_cast<std::int64_t>(std::ceil(spec.col + spec.radius));
    for (std::int64_t y = std::max<std::int64_t>(0, y0); y <= std::min(h - 1, y1); ++y) {
        for (std::int64_t x = std::max<std::int64_t>(0, x0); x <= std::min(w - 1, x1); ++x) {
            const double dy = static_cast<double>(y) - spec.row;
            const double dx = static_cast<double>(x) - spec.col;
            const double d = std::sqrt(dy * dy + dx * dx);
            if (d >= spec.radius) continue;
            const double move = spec.strength * (spec.radius - d);
            if (move >= 0.5) msk[y * w + x] = 1.0f;
            // Sub-1e-4-pixel displacements are treated as zero so the
            // vanishing-strength limit reproduces the input bit-for-bit.
            if (d == 0.0 || move < 1e-4) continue;
            const double sy = static_cast<double>(y) + dy / d * move;
            const double sx = static_cast<double>(x) + dx / d * move;
            const std::int64_t iy = static_cast<std::int64_t>(std::floor(sy));
            const std::int64_t ix = static_cast<std::int64_t>(std::floor(sx));
            const double fy = sy - static_cast<double>(iy);
            const double fx = sx - static_cast<double>(ix);
            const auto cy = [&](std::int64_t v) { return std::clamp<std::int64_t>(v, 0, h - 1); };
            const auto cx = [&](std::int64_t v) { return std::clamp<std::int64_t>(v, 0, w - 1); };
            const double v00 = src[cy(iy) * w + cx(ix)];
            const double v01 = src[cy(iy) * w + cx(ix + 1)];
            const double v10 = src[cy(iy + 1) * w + cx(ix)];
            const double v11 = src[cy(iy + 1) * w + cx(ix + 1)];
            const double val = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
                               fy * ((1.0 - fx) * v10 + fx * v11);
            dst[y * w + x] = static_cast<float>(val);
        }
    }
}

std::string SinkSpec::to_json() const {
    nlohmann::json j;
    j["row"] = row;
    j["col"] = col;
    j["radius"] = radius;
    j["strength"] = strength;
    j["seed"] = seed;
    return j.dump();
}

SinkSpec SinkSpec::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    SinkSpec s;
    s.row = j.at("row").get<double>();
    s.col = j.at("col").get<double>();
    s.radius = j.at("radius").get<double>();
    s.strength = j.at("strength").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

}  // namespace fae::anomaly
