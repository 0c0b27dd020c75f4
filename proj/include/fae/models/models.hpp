#pragma once

#include <array>
#include <string>

#include "fae/features/backbone.hpp"
#include "fae/nn/layers.hpp"

namespace fae::models {

struct FeatureAeSpec {
    std::int64_t in_channels = 0;
    std::array<std::int64_t, 4> encoder_channels{100, 150, 200, 300};
    int kernel = 5;
    int stride = 2;
    float negative_slope = 0.01f;
    float dropout_p = 0.1f;
    int bottleneck_kernel = 5;
    std::int64_t bottleneck_channels = 300;

    void validate() const;
    std::string to_json() const;
    static FeatureAeSpec from_json(const std::string& text);
};

enum class ModelKind { feature_ae, image_ae_mse, image_ae_ssim, dfr_style, dfr_style_ssim };

std::string model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

// Feature-space models consume backbone features; image models raw slices.
bool is_feature_space(ModelKind k);
// The training objective each kind uses (1-MSSIM or plain MSE).
bool uses_mssim_loss(ModelKind k);

struct Model {
    ModelKind kind = ModelKind::feature_ae;
    FeatureAeSpec spec;                       // meaningful for conv AE kinds
    std::uint64_t seed = 0;
    std::array<std::int64_t, 3> input_chw{0, 0, 0};
    nn::Network net;

    // Inference: dropout off, frozen normalization statistics.
    Tensor reconstruct(const Tensor& x);
    std::int64_t parameter_count() { return net.parameter_count(); }
};

// Encoder 4 x [5x5 stride-2 conv (no bias) -> batchnorm -> leaky relu ->
// dropout] with channels 100/150/200/300, closed by a bias-free 5x5 stride-1
// conv; decoder mirrors with strided transpose convs and ends in a biased
// 1x1 conv back to in_channels. Spatial size must be divisible by 16.
Model build_feature_ae(const FeatureAeSpec& spec, std::array<std::int64_t, 3> input_chw,
                       std::uint64_t seed);

// feature_ae per the spec above; image_ae_* reuse the same topology on
// 1-channel images; dfr_style* use a 1x1-conv stack [128, 64, C/2, 64, 128].
Model build_model(ModelKind kind, std::array<std::int64_t, 3> input_chw, std::uint64_t seed);

// Versioned checkpoint: model identity, parameters, normalization statistics,
// and the calibrated ssim dynamic range.
void save_checkpoint(Model& model, double dynamic_range, const std::string& path,
                     const std::string& config_hash = "");
Model load_checkpoint(const std::string& path, double* dynamic_range);

}  // namespace fae::models
