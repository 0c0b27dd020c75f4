#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "fae/tensor.hpp"

namespace fae::features {

// Which backbone taps to fuse: 0 = stem output, 1..3 = residual stages.
struct LayerSelection {
    std::vector<int> layer_ids;

    void validate() const;
    std::string to_string() const;                       // e.g. "0,1,2"
    static LayerSelection parse(const std::string& s);   // accepts "0,1,2"
};

struct FeatureStack {
    Tensor features;                              // [B, C, H, W]
    std::vector<std::int64_t> layer_boundaries;   // channel offset per selected
                                                  // layer, plus total C at the end
};

struct FusedGeometry {
    std::int64_t channels = 0, height = 0, width = 0;
};

// Fused stack geometry for a square input, without running the backbone.
FusedGeometry output_geometry(const LayerSelection& sel, std::int64_t input_size);

// Per-layer channel width of the 18-layer residual backbone taps.
std::array<std::int64_t, 4> layer_channels();

// Frozen 18-layer residual feature extractor (stem + three residual stages),
// inference mode only. Weights come from a tensor archive, or from a seeded
// random initialization for self-contained runs without a pretrained file.
class Backbone {
  public:
    static Backbone random_init(std::uint64_t seed);
    static Backbone from_archive(const std::string& path);  // InitError if unreadable

    // batch: [B, 1, H, W] grayscale in [0, 1]. Replicates to 3 channels,
    // normalizes with the published input statistics, runs the frozen net, and
    // fuses the selected taps at the largest selected spatial size.
    FeatureStack extract(const Tensor& batch, const LayerSelection& sel) const;

    // FNV-1a over all weight/statistic bytes in a fixed order.
    std::uint64_t weight_fingerprint() const;

  private:
    struct ConvBn {
        Tensor w;                      // [out_c, in_c, k, k], bias-free
        Tensor gamma, beta, mean, var;
        std::int64_t stride = 1, pad = 0;
    };
    struct Block {
        ConvBn conv1, conv2;
        std::optional<ConvBn> down;
    };

    Backbone() = default;
    Tensor run_conv_bn(const ConvBn& cb, const Tensor& x) const;
    Tensor run_block(const Block& b, const Tensor& x) const;

    ConvBn stem_;
    std::array<std::array<Block, 2>, 3> stages_;
};

}  // namespace fae::features
