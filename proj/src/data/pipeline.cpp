#include "fae/data/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fae/anomaly/sink.hpp"
#include "fae/common.hpp"
#include "fae/io/archive.hpp"
#include "fae/io/nifti.hpp"
#include "fae/rng.hpp"

namespace fae::data {

Volume load_volume(const std::string& path, VolumeFormat format) {
    Volume v;
    if (format == VolumeFormat::nifti) {
        io::NiftiVolume n = io::load_nifti(path);
        v.voxels = Tensor({n.nz, n.ny, n.nx});
        // NIfTI stores x fastest, so the flat order already matches [z, y, x].
        std::copy(n.voxels.begin(), n.voxels.end(), v.voxels.data());
        v.spacing = {n.pixdim[2], n.pixdim[1], n.pixdim[0]};
        v.id = path;
    } else {
        io::TensorArchive ar = io::TensorArchive::load(path);
        v.voxels = ar.get("voxels");
        if (ar.has("spacing")) {
            const auto sp = ar.get_f64("spacing");
            if (sp.size() == 3) v.spacing = {sp[0], sp[1], sp[2]};
        }
        v.id = ar.has("id") ? ar.get_bytes("id") : path;
    }
    if (v.voxels.rank() != 3) throw FormatError(path + ": expected a 3-D volume");
    if (!v.voxels.all_finite()) throw FormatError(path + ": volume contains non-finite voxels");
    return v;
}

void save_volume(const Volume& v, const std::string& path) {
    if (v.voxels.rank() != 3) throw ContractError("save volume: voxels must be 3-D");
    io::TensorArchive ar;
    ar.put("voxels", v.voxels);
    ar.put_f64("spacing", {v.spacing[0], v.spacing[1], v.spacing[2]});
    ar.put_bytes("id", v.id);
    ar.save(path);
}

void SliceBatch::validate() const {
    const std::int64_t b = size();
    if (b == 0) return;
    if (images.rank() != 4 || images.shape()[1] != 1)
        throw ContractError("slice batch: images must be [B, 1, S, S]");
    if (!images.all_finite()) throw ContractError("slice batch: non-finite image values");
    if (images.min() < 0.0f || images.max() > 1.0f)
        throw ContractError("slice batch: image values must lie in [0, 1]");
    if (static_cast<std::int64_t>(ids.size()) != b)
        throw ContractError("slice batch: ids/images size mismatch");
    if (!labels.empty()) {
        if (static_cast<std::int64_t>(labels.size()) != b)
            throw ContractError("slice batch: labels/images size mismatch");
        for (int l : labels)
            if (l != 0 && l != 1) throw ContractError("slice batch: labels must be 0 or 1");
    }
    if (masks.numel()) {
        if (masks.rank() != 3 || masks.shape()[0] != b || masks.shape()[1] != images.shape()[2] ||
            masks.shape()[2] != images.shape()[3])
            throw ContractError("slice batch: mask shape mismatch");
        for (std::int64_t i = 0; i < masks.numel(); ++i)
            if (masks[static_cast<std::size_t>(i)] != 0.0f &&
                masks[static_cast<std::size_t>(i)] != 1.0f)
                throw ContractError("slice batch: masks must be binary");
        if (!labels.empty()) {
            const std::int64_t plane = masks.shape()[1] * masks.shape()[2];
            for (std::int64_t i = 0; i < b; ++i) {
                bool any = false;
                const float* m = masks.data() + i * plane;
                for (std::int64_t j = 0; j < plane && !any; ++j) any = m[j] != 0.0f;
                if (any != (labels[static_cast<std::size_t>(i)] == 1))
                    throw ContractError("slice batch: mask nonempty iff label is 1");
            }
        }
    }
}

Tensor equalize_nonzero(const Tensor& voxels) {
    constexpr int kBins = 256;
    Tensor out(voxels.shape());
    const float* in = voxels.data();
    const std::int64_t n = voxels.numel();

    float lo = 0.0f, hi = 0.0f;
    bool seen = false;
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (in[i] == 0.0f) continue;
        if (!seen) {
            lo = hi = in[i];
            seen = true;
        } else {
            lo = std::min(lo, in[i]);
            hi = std::max(hi, in[i]);
        }
        ++count;
    }
    if (!seen) return out;  // all zero stays all zero

    std::array<std::int64_t, kBins> histogram{};
    const double span = static_cast<double>(hi) - static_cast<double>(lo);
    auto bin_of = [&](float v) {
        if (span == 0.0) return 0;
        const int b = static_cast<int>((static_cast<double>(v) - lo) / span * kBins);
        return std::clamp(b, 0, kBins - 1);
    };
    for (std::int64_t i = 0; i < n; ++i)
        if (in[i] != 0.0f) ++histogram[static_cast<std::size_t>(bin_of(in[i]))];

    std::array<double, kBins> cdf{};
    std::int64_t running = 0;
    for (int b = 0; b < kBins; ++b) {
        running += histogram[static_cast<std::size_t>(b)];
        cdf[static_cast<std::size_t>(b)] = static_cast<double>(running) / static_cast<double>(count);
    }
    float* o = out.data();
    for (std::int64_t i = 0; i < n; ++i)
        o[i] = in[i] == 0.0f ? 0.0f : static_cast<float>(cdf[static_cast<std::size_t>(bin_of(in[i]))]);
    return out;
}

SliceBatch preprocess(const Volume& v, int n_center_slices, int out_size) {
    if (v.voxels.rank() != 3) throw ContractError("preprocess: voxels must be 3-D");
    if (n_center_slices < 1 || out_size < 8) throw ContractError("preprocess: bad arguments");
    const std::int64_t nz = v.voxels.shape()[0];
    const std::int64_t ny = v.voxels.shape()[1];
    const std::int64_t nx = v.voxels.shape()[2];
    if (nz < n_center_slices)
        throw RangeError("preprocess: volume has " + std::to_string(nz) + " slices, needs " +
                         std::to_string(n_center_slices));

    const Tensor eq = equalize_nonzero(v.voxels);
    const std::int64_t start = nz / 2 - n_center_slices / 2;

    SliceBatch batch;
    batch.images = Tensor({n_center_slices, 1, out_size, out_size});
    for (std::int64_t s = 0; s < n_center_slices; ++s) {
        const float* src = eq.data() + (start + s) * ny * nx;
        float* dst = batch.images.data() + s * out_size * out_size;
        bilinear_resize_2d(src, ny, nx, dst, out_size, out_size);
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(out_size) * out_size; ++i)
            dst[i] = std::clamp(dst[i], 0.0f, 1.0f);
        batch.ids.push_back({v.id, static_cast<int>(start + s)});
    }
    batch.validate();
    return batch;
}

SliceBatch take_slices(const SliceBatch& batch, const std::vector<std::int64_t>& rows) {
    SliceBatch out;
    if (rows.empty()) return out;
    const std::int64_t s_h = batch.images.shape()[2];
    const std::int64_t s_w = batch.images.shape()[3];
    const std::int64_t plane = s_h * s_w;
    out.images = Tensor({static_cast<std::int64_t>(rows.size()), 1, s_h, s_w});
    if (batch.masks.numel())
        out.masks = Tensor({static_cast<std::int64_t>(rows.size()), s_h, s_w});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::int64_t r = rows[i];
        if (r < 0 || r >= batch.size()) throw ContractError("take slices: row out of range");
        std::copy(batch.images.data() + r * plane, batch.images.data() + (r + 1) * plane,
                  out.images.data() + static_cast<std::int64_t>(i) * plane);
        if (batch.masks.numel())
            std::copy(batch.masks.data() + r * plane, batch.masks.data() + (r + 1) * plane,
                      out.masks.data() + static_cast<std::int64_t>(i) * plane);
        if (!batch.labels.empty()) out.labels.push_back(batch.labels[static_cast<std::size_t>(r)]);
        out.ids.push_back(batch.ids[static_cast<std::size_t>(r)]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Phantom dataset

namespace {

constexpr std::int64_t kPhantomNz = 96, kPhantomNy = 160, kPhantomNx = 160;

// Value of a coarse grid trilinearly interpolated at a fractional position
// in [0,1]^3 (grid cells cover the unit cube, clamped edges).
struct CoarseField {
    std::vector<float> g;
    std::int64_t d = 0, h = 0, w = 0;

    static CoarseField random(std::int64_t d, std::int64_t h, std::int64_t w, Rng& rng) {
        CoarseField f;
        f.d = d;
        f.h = h;
        f.w = w;
        f.g.resize(static_cast<std::size_t>(d * h * w));
        for (auto& v : f.g) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        return f;
    }

    double at(double uz, double uy, double ux) const {
        const auto sample_axis = [](double u, std::int64_t n, std::int64_t& i0, std::int64_t& i1,
                                    double& t) {
            const double p = u * static_cast<double>(n - 1);
            i0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(p)), 0, n - 1);
            i1 = std::min(i0 + 1, n - 1);
            t = p - static_cast<double>(i0);
        };
        std::int64_t z0, z1, y0, y1, x0, x1;
        double tz, ty, tx;
        sample_axis(std::clamp(uz, 0.0, 1.0), d, z0, z1, tz);
        sample_axis(std::clamp(uy, 0.0, 1.0), h, y0, y1, ty);
        sample_axis(std::clamp(ux, 0.0, 1.0), w, x0, x1, tx);
        auto v = [&](std::int64_t z, std::int64_t y, std::int64_t x) {
            return static_cast<double>(g[static_cast<std::size_t>((z * h + y) * w + x)]);
        };
        const double c00 = v(z0, y0, x0) * (1 - tx) + v(z0, y0, x1) * tx;
        const double c01 = v(z0, y1, x0) * (1 - tx) + v(z0, y1, x1) * tx;
        const double c10 = v(z1, y0, x0) * (1 - tx) + v(z1, y0, x1) * tx;
        const double c11 = v(z1, y1, x0) * (1 - tx) + v(z1, y1, x1) * tx;
        const double c0 = c00 * (1 - ty) + c01 * ty;
        const double c1 = c10 * (1 - ty) + c11 * ty;
        return c0 * (1 - tz) + c1 * tz;
    }
};

}  // namespace

Volume make_phantom_volume(int index, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "phantom-volume", static_cast<std::uint64_t>(index)));
    const std::int64_t nz = kPhantomNz, ny = kPhantomNy, nx = kPhantomNx;

    const double az = 0.52 * static_cast<double>(nz) * rng.uniform(0.9, 1.05);
    const double ay = 0.42 * static_cast<double>(ny) * rng.uniform(0.9, 1.05);
    const double ax = 0.42 * static_cast<double>(nx) * rng.uniform(0.9, 1.05);
    const double cz = 0.5 * static_cast<double>(nz) + rng.uniform(-2.0, 2.0);
    const double cy = 0.5 * static_cast<double>(ny) + rng.uniform(-3.0, 3.0);
    const double cx = 0.5 * static_cast<double>(nx) + rng.uniform(-3.0, 3.0);
    const double rings = rng.uniform(3.5, 6.5);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

    const CoarseField noise = CoarseField::random(7, 9, 9, rng);
    const CoarseField warp_z = CoarseField::random(5, 6, 6, rng);
    const CoarseField warp_y = CoarseField::random(5, 6, 6, rng);
    const CoarseField warp_x = CoarseField::random(5, 6, 6, rng);
    const double warp_amp_z = 0.035 * static_cast<double>(nz);
    const double warp_amp_yx = 0.030 * static_cast<double>(ny);

    Volume vol;
    vol.voxels = Tensor({nz, ny, nx});
    vol.id = "phantom_" + std::to_string(index);
    float* out = vol.voxels.data();
    for (std::int64_t z = 0; z < nz; ++z) {
        const double uz = static_cast<double>(z) / static_cast<double>(nz - 1);
        for (std::int64_t y = 0; y < ny; ++y) {
            const double uy = static_cast<double>(y) / static_cast<double>(ny - 1);
            for (std::int64_t x = 0; x < nx; ++x) {
                const double ux = static_cast<double>(x) / static_cast<double>(nx - 1);
                const double qz = static_cast<double>(z) + warp_amp_z * warp_z.at(uz, uy, ux);
                const double qy = static_cast<double>(y) + warp_amp_yx * warp_y.at(uz, uy, ux);
                const double qx = static_cast<double>(x) + warp_amp_yx * warp_x.at(uz, uy, ux);
                const double rz = (qz - cz) / az;
                const double ry = (qy - cy) / ay;
                const double rx = (qx - cx) / ax;
                const double rho = std::sqrt(rz * rz + ry * ry + rx * rx);
                double v = 0.0;
                if (rho < 1.0) {
                    v = 0.52 + 0.28 * std::sin(2.0 * std::numbers::pi * rings * rho + phase) +
                        0.10 * (1.0 - rho) + 0.10 * noise.at(uz, uy, ux);
                    v = std::clamp(v, 0.05, 0.98);
                }
                out[(z * ny + y) * nx + x] = static_cast<float>(v);
            }
        }
    }
    return vol;
}

namespace {

void inject_into_split(SliceBatch& split, std::int64_t slices_per_volume, std::uint64_t seed,
                       std::uint64_t volume_tag_base) {
    const std::int64_t s = split.images.shape()[2];
    const std::int64_t plane = s * s;
    split.masks = Tensor({split.size(), s, s});
    split.labels.assign(static_cast<std::size_t>(split.size()), 0);

    const std::int64_t n_vols = split.size() / slices_per_volume;
    for (std::int64_t v = 0; v < n_vols; ++v) {
        Rng pick(derive_seed(seed, "inject-pick", volume_tag_base + static_cast<std::uint64_t>(v)));
        const std::vector<std::size_t> perm =
            pick.permutation(static_cast<std::size_t>(slices_per_volume));
        const std::int64_t n_anom = slices_per_volume / 2;
        for (std::int64_t k = 0; k < n_anom; ++k) {
            const std::int64_t row =
                v * slices_per_volume + static_cast<std::int64_t>(perm[static_cast<std::size_t>(k)]);
            float* img = split.images.data() + row * plane;
            Tensor slice({s, s});
            std::copy(img, img + plane, slice.data());
            Tensor fg({s, s});
            for (std::int64_t i = 0; i < plane; ++i)
                fg[static_cast<std::size_t>(i)] = slice[static_cast<std::size_t>(i)] > 0.0f ? 1.0f : 0.0f;
            const std::uint64_t sink_seed =
                derive_seed(seed, "sink", (volume_tag_base + static_cast<std::uint64_t>(v)) * 4096 +
                                              static_cast<std::uint64_t>(perm[static_cast<std::size_t>(k)]));
            const anomaly::SinkSpec spec = anomaly::sample_sink_spec(slice, fg, sink_seed);
            Tensor deformed, mask;
            anomaly::apply_sink(slice, spec, deformed, mask);
            std::copy(deformed.data(), deformed.data() + plane, img);
            std::copy(mask.data(), mask.data() + plane,
                      split.masks.data() + row * plane);
            split.labels[static_cast<std::size_t>(row)] = 1;
        }
    }
    split.validate();
}

void append_batch(SliceBatch& dst, const SliceBatch& src) {
    if (dst.size() == 0) {
        dst = src;
        return;
    }
    Tensor merged({dst.size() + src.size(), src.images.shape()[1], src.images.shape()[2],
                   src.images.shape()[3]});
    std::copy(dst.images.data(), dst.images.data() + dst.images.numel(), merged.data());
    std::copy(src.images.data(), src.images.data() + src.images.numel(),
              merged.data() + dst.images.numel());
    dst.images = std::move(merged);
    dst.ids.insert(dst.ids.end(), src.ids.begin(), src.ids.end());
    dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
}

}  // namespace

DatasetSplit assemble_dataset(const std::vector<SliceBatch>& per_volume, std::uint64_t seed) {
    const std::int64_t n_volumes = static_cast<std::int64_t>(per_volume.size());
    if (n_volumes < 3) throw RangeError("dataset: need at least 3 volumes");
    const std::int64_t slices_per_volume = per_volume[0].size();
    if (slices_per_volume < 2) throw RangeError("dataset: volumes must carry at least 2 slices");
    for (const SliceBatch& b : per_volume)
        if (b.size() != slices_per_volume)
            throw ContractError("dataset: volumes must have equal slice counts");

    const auto round_share = [&](double f) {
        return std::max<std::int64_t>(1, std::llround(f * static_cast<double>(n_volumes)));
    };
    const std::int64_t n_val = round_share(0.02);
    const std::int64_t n_test = round_share(0.18);
    const std::int64_t n_train = n_volumes - n_val - n_test;
    if (n_train < 1) throw RangeError("dataset: too few volumes for a train split");

    DatasetSplit split;
    split.seed = seed;
    for (std::int64_t v = 0; v < n_volumes; ++v) {
        SliceBatch slices = per_volume[static_cast<std::size_t>(v)];
        if (v < n_train) {
            slices.labels.assign(static_cast<std::size_t>(slices.size()), 0);
            append_batch(split.train, slices);
        } else if (v < n_train + n_val) {
            append_batch(split.val, slices);
        } else {
            append_batch(split.test, slices);
        }
    }
    // Anomalies on half the val/test slices; tags keep per-volume streams
    // disjoint between the two splits.
    inject_into_split(split.val, slices_per_volume, seed, 1000000);
    inject_into_split(split.test, slices_per_volume, seed, 2000000);
    split.train.validate();
    return split;
}

DatasetSplit make_phantom_dataset(int n_volumes, std::uint64_t seed) {
    if (n_volumes < 3) throw RangeError("phantom dataset: need at least 3 volumes");
    constexpr int kSlices = 80, kSize = 128;
    std::vector<SliceBatch> per_volume;
    per_volume.reserve(static_cast<std::size_t>(n_volumes));
    for (int v = 0; v < n_volumes; ++v)
        per_volume.push_back(preprocess(make_phantom_volume(v, seed), kSlices, kSize));
    return assemble_dataset(per_volume, seed);
}

}  // namespace fae::data
