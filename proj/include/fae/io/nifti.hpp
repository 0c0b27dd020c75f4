#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace fae::io {

// Minimal NIfTI-1 reader: enough for single-file .nii / .nii.gz scalar
// volumes. Voxels are returned in file order (x fastest, then y, then z)
// with scl_slope/scl_inter applied.
struct NiftiVolume {
    std::int64_t nx = 0, ny = 0, nz = 0;
    std::array<float, 3> pixdim = {1.0f, 1.0f, 1.0f};
    std::vector<float> voxels;  // size nx*ny*nz
};

NiftiVolume load_nifti(const std::string& path);

// Gzip-or-plain file slurp (used by the NIfTI loader; exposed for tests).
std::vector<unsigned char> read_file_maybe_gz(const std::string& path);

}  // namespace fae::io
