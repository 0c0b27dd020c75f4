#pragma once

#include <string>
#include <vector>

#include "fae/data/pipeline.hpp"
#include "fae/ssim/ssim.hpp"
#include "fae/tensor.hpp"

namespace fae::scoring {

enum class Reducer { mean, max, topk_mean };

std::string reducer_name(Reducer r);
Reducer reducer_from_name(const std::string& name);

struct ScoreConfig {
    Reducer reducer = Reducer::mean;
    std::int64_t topk = 100;        // topk_mean only
    std::int64_t target_size = 128;
};

struct AnomalyMapBatch {
    Tensor pixel_scores;              // [B, target, target] in [0, 1]
    std::vector<double> image_scores; // one per slice, reducer over pixels
    std::vector<data::SliceId> ids;
};

// Per-pixel score = (1 - ssim)/2 at input resolution, bilinearly upsampled to
// target_size^2. Inputs are [B,C,H,W] pairs (features or images).
AnomalyMapBatch anomaly_map(const Tensor& input, const Tensor& reconstruction,
                            const ssim::SsimConfig& cfg, const ScoreConfig& score_cfg,
                            const std::vector<data::SliceId>& ids);

// pixel_scores >= t as {0,1}; accepts [S,S] or [B,S,S]. t outside [0,1] ->
// RangeError.
Tensor threshold_map(const Tensor& pixel_scores, double t);

// Side-by-side grayscale panels: input slice, ground-truth mask, anomaly map
// thresholded at `threshold`. Deterministic bytes.
void export_overlay(const Tensor& slice, const Tensor& mask, const Tensor& pixel_scores,
                    double threshold, const std::string& path);

double reduce_image_score(const float* scores, std::int64_t n, const ScoreConfig& cfg);

}  // namespace fae::scoring
