#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fae/tensor.hpp"

namespace fae::anomaly {

// A sink deformation: content inside the disk is pulled toward the center.
struct SinkSpec {
    double row = 0.0, col = 0.0;  // center, pixels
    double radius = 0.0;          // pixels
    double strength = 0.0;        // (0, 1]
    std::uint64_t seed = 0;       // sampling seed, for exact reconstruction

    std::string to_json() const;
    static SinkSpec from_json(const std::string& text);
};

// Minimum/maximum sink radius at 128^2 resolution and the strength range.
inline constexpr double kMinRadius = 8.0;
inline constexpr double kMaxRadius = 24.0;
inline constexpr double kMinStrength = 0.3;
inline constexpr double kMaxStrength = 0.9;

// Squared Euclidean distance to the nearest zero pixel or image border,
// exact (Felzenszwalb lower-envelope transform). foreground: 0/1 per pixel.
std::vector<double> squared_distance_to_background(const std::vector<std::uint8_t>& foreground,
                                                   std::int64_t h, std::int64_t w);

// Samples radius ~ U[8, min(24, largest radius that fits)], strength ~
// U[0.3, 0.9], then the center uniformly over pixels whose disk stays strictly
// inside the foreground and the image. No valid placement -> PlacementError.
SinkSpec sample_sink_spec(const Tensor& image, const Tensor& foreground, std::uint64_t rng_seed);

// Resamples pixels inside the disk from positions displaced radially outward
// (linear falloff, bilinear interpolation); mask = pixels whose source
// displacement is >= 0.5 px. Disk outside image bounds -> RangeError.
void apply_sink(const Tensor& image, const SinkSpec& spec, Tensor& deformed, Tensor& mask);

}  // namespace fae::anomaly
