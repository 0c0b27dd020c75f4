#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fae/tensor.hpp"

namespace fae::data {

struct Volume {
    Tensor voxels;  // [slices, height, width]
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::string id;
};

enum class VolumeFormat { nifti, raw_tensor };

// Loads a 3-D volume, slices-first. NIfTI x/y/z grids come out as [z, y, x].
// Unreadable file -> IoError; non-3-D or non-finite data -> FormatError.
Volume load_volume(const std::string& path, VolumeFormat format);

// Persists a volume as a raw tensor archive (entries: voxels, spacing, id).
void save_volume(const Volume& v, const std::string& path);

struct SliceId {
    std::string volume;
    int slice = 0;
};

struct SliceBatch {
    Tensor images;               // [B, 1, S, S] in [0, 1]
    Tensor masks;                // [B, S, S] of {0,1}; empty when unlabeled
    std::vector<int> labels;     // {0,1} per slice; empty when unlabeled
    std::vector<SliceId> ids;    // one per slice

    std::int64_t size() const { return images.numel() ? images.shape()[0] : 0; }
    bool labeled() const { return !labels.empty(); }
    void validate() const;
};

// Histogram equalization over the nonzero voxels (256 bins, per volume);
// zeros stay zero, output in [0, 1]. Exposed separately for direct testing.
Tensor equalize_nonzero(const Tensor& voxels);

// Equalize, take the center n slices, resize each to out_size^2 bilinearly.
// Fewer than n_center_slices slices -> RangeError.
SliceBatch preprocess(const Volume& v, int n_center_slices = 80, int out_size = 128);

struct DatasetSplit {
    SliceBatch train;  // normal only
    SliceBatch val;
    SliceBatch test;
    std::uint64_t seed = 0;
};

// Splits preprocessed volumes 80/2/18 into train/val/test (at least one volume
// per split) and injects one sink anomaly into half of the val/test slices.
// Volumes must share one slice count; train stays anomaly-free.
DatasetSplit assemble_dataset(const std::vector<SliceBatch>& per_volume, std::uint64_t seed);

// Deterministic synthetic dataset: ellipsoidal "anatomy" with ring texture,
// smooth per-volume deformation and noise; volumes split 80/2/18 into
// train/val/test; half of the val/test slices receive one sink anomaly each.
// n_volumes < 3 -> RangeError.
DatasetSplit make_phantom_dataset(int n_volumes, std::uint64_t seed);

// One phantom volume (exposed for tests; ids are "phantom_NNN").
Volume make_phantom_volume(int index, std::uint64_t seed);

// Rows of `batch` selected by position, in the given order.
SliceBatch take_slices(const SliceBatch& batch, const std::vector<std::int64_t>& rows);

}  // namespace fae::data
