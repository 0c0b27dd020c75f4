#include "fae/scoring/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "fae/common.hpp"
#include "fae/io/png.hpp"

namespace fae::scoring {

std::string reducer_name(Reducer r) {
    switch (r) {
        case Reducer::mean: return "mean";
        case Reducer::max: return "max";
        case Reducer::topk_mean: return "topk_mean";
    }
    throw ContractError("unreachable reducer");
}

Reducer reducer_from_name(const std::string& name) {
    if (name == "mean") return Reducer::mean;
    if (name == "max") return Reducer::max;
    if (name == "topk_mean") return Reducer::topk_mean;
    throw ConfigError("unknown reducer: " + name);
}

double reduce_image_score(const float* scores, std::int64_t n, const ScoreConfig& cfg) {
    if (n == 0) throw ContractError("image score: empty map");
    switch (cfg.reducer) {
        case Reducer::mean: {
            double s = 0.0;
            for (std::int64_t i = 0; i < n; ++i) s += scores[i];
            return s / static_cast<double>(n);
        }
        case Reducer::max: {
            float m = scores[0];
            for (std::int64_t i = 1; i < n; ++i) m = std::max(m, scores[i]);
            return m;
        }
        case Reducer::topk_mean: {
            const std::int64_t k = std::min<std::int64_t>(std::max<std::int64_t>(cfg.topk, 1), n);
            std::vector<float> v(scores, scores + n);
            std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n - k), v.end());
            double s = 0.0;
            for (std::int64_t i = n - k; i < n; ++i) s += v[static_cast<std::size_t>(i)];
            return s / static_cast<double>(k);
        }
    }
    throw ContractError("unreachable reducer");
}

AnomalyMapBatch anomaly_map(const Tensor& input, const Tensor& reconstruction,
                            const ssim::SsimConfig& cfg, const ScoreConfig& score_cfg,
                            const std::vector<data::SliceId>& ids) {
    if (input.shape() != reconstruction.shape())
        throw ContractError("anomaly map: input and reconstruction shapes differ");
    const Tensor sim = ssim::ssim_map(input, reconstruction, cfg);  // [B, H, W]
    const std::int64_t b = sim.shape()[0];
    const std::int64_t h = sim.shape()[1];
    const std::int64_t w = sim.shape()[2];
    if (!ids.empty() && static_cast<std::int64_t>(ids.size()) != b)
        throw ContractError("anomaly map: ids size mismatch");

    Tensor raw({b, h, w});
    for (std::int64_t i = 0; i < raw.numel(); ++i) {
        const float v = (1.0f - sim[static_cast<std::size_t>(i)]) * 0.5f;
        raw[static_cast<std::size_t>(i)] = std::clamp(v, 0.0f, 1.0f);
    }

    AnomalyMapBatch out;
    const std::int64_t s = score_cfg.target_size;
    if (s == h && s == w) {
        out.pixel_scores = std::move(raw);
    } else {
        out.pixel_scores = Tensor({b, s, s});
        for (std::int64_t i = 0; i < b; ++i)
            bilinear_resize_2d(raw.data() + i * h * w, h, w, out.pixel_scores.data() + i * s * s,
                               s, s);
        for (std::int64_t i = 0; i < out.pixel_scores.numel(); ++i)
            out.pixel_scores[static_cast<std::size_t>(i)] =
                std::clamp(out.pixel_scores[static_cast<std::size_t>(i)], 0.0f, 1.0f);
    }
    for (std::int64_t i = 0; i < b; ++i)
        out.image_scores.push_back(
            reduce_image_score(out.pixel_scores.data() + i * s * s, s * s, score_cfg));
    out.ids = ids;
    return out;
}

Tensor threshold_map(const Tensor& pixel_scores, double t) {
    if (t < 0.0 || t > 1.0) throw RangeError("threshold: t must lie in [0, 1]");
    if (pixel_scores.rank() != 2 && pixel_scores.rank() != 3)
        throw ContractError("threshold: scores must be [S,S] or [B,S,S]");
    Tensor out(pixel_scores.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out[static_cast<std::size_t>(i)] =
            pixel_scores[static_cast<std::size_t>(i)] >= static_cast<float>(t) ? 1.0f : 0.0f;
    return out;
}

void export_overlay(const Tensor& slice, const Tensor& mask, const Tensor& pixel_scores,
                    double threshold, const std::string& path) {
    if (slice.rank() != 2 || mask.rank() != 2 || pixel_scores.rank() != 2)
        throw ContractError("overlay: panels must be 2-D");
    if (slice.shape() != mask.shape() || slice.shape() != pixel_scores.shape())
        throw ContractError("overlay: panel shapes differ");
    const std::int64_t h = slice.shape()[0];
    const std::int64_t w = slice.shape()[1];
    const Tensor thresholded = threshold_map(pixel_scores, threshold);

    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(h * 3 * w));
    const auto to_byte = [](float v) {
        return static_cast<std::uint8_t>(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f);
    };
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            pixels[static_cast<std::size_t>(y * 3 * w + x)] =
                to_byte(slice[static_cast<std::size_t>(y * w + x)]);
            pixels[static_cast<std::size_t>(y * 3 * w + w + x)] =
                mask[static_cast<std::size_t>(y * w + x)] != 0.0f ? 255 : 0;
            pixels[static_cast<std::size_t>(y * 3 * w + 2 * w + x)] =
                thresholded[static_cast<std::size_t>(y * w + x)] != 0.0f ? 255 : 0;
        }
    }
    io::write_png_gray8(path, pixels, 3 * w, h);
}

}  // namespace fae::scoring
