// Tests for volume loading, equalization, slicing, phantom generation, and
// dataset assembly with injected anomalies.
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "fae/common.hpp"
#include "fae/data/pipeline.hpp"
#include "fae/io/archive.hpp"
#include "fae/rng.hpp"
#include "fae/tensor.hpp"
#include "support/oracles.hpp"

using fae::Tensor;
using fae::data::DatasetSplit;
using fae::data::SliceBatch;
using fae::data::Volume;

namespace {

std::filesystem::path test_dir() {
    auto d = std::filesystem::temp_directory_path() / "fae_test_pipeline";
    std::filesystem::create_directories(d);
    return d;
}

Tensor random_voxels(std::vector<std::int64_t> shape, std::uint64_t seed, double zero_share) {
    Tensor t(std::move(shape));
    fae::Rng rng(seed);
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        if (rng.uniform() < zero_share)
            t.data()[i] = 0.0f;
        else
            t.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    }
    return t;
}

std::vector<float> to_vec(const Tensor& t) {
    return std::vector<float>(t.data(), t.data() + t.numel());
}

// A labeled, masked batch that satisfies every invariant.
SliceBatch make_valid_batch() {
    SliceBatch b;
    b.images = Tensor({3, 1, 4, 4});
    for (std::int64_t i = 0; i < b.images.numel(); ++i)
        b.images.data()[i] = 0.25f + 0.01f * static_cast<float>(i % 16);
    b.masks = Tensor::full({3, 4, 4}, 0.0f);
    b.masks.data()[1 * 16 + 5] = 1.0f;  // row 1 carries the anomaly
    b.labels = {0, 1, 0};
    b.ids = {{"v", 0}, {"v", 1}, {"v", 2}};
    return b;
}

// Per-volume unlabeled batches with all-foreground images, spaced far enough
// from the border that anomaly placement always succeeds.
std::vector<SliceBatch> synthetic_volumes(int n_volumes, int slices, int size,
                                          std::uint64_t seed) {
    std::vector<SliceBatch> vols;
    for (int v = 0; v < n_volumes; ++v) {
        SliceBatch b;
        b.images = Tensor({slices, 1, size, size});
        fae::Rng rng(fae::derive_seed(seed, "synthetic-volume", static_cast<std::uint64_t>(v)));
        for (std::int64_t i = 0; i < b.images.numel(); ++i)
            b.images.data()[i] = static_cast<float>(rng.uniform(0.2, 0.9));
        for (int s = 0; s < slices; ++s) b.ids.push_back({"vol_" + std::to_string(v), s});
        vols.push_back(std::move(b));
    }
    return vols;
}

std::vector<float> image_row(const SliceBatch& b, std::int64_t row) {
    const std::int64_t plane = b.images.shape()[2] * b.images.shape()[3];
    const float* p = b.images.data() + row * plane;
    return std::vector<float>(p, p + plane);
}

std::vector<float> mask_row(const SliceBatch& b, std::int64_t row) {
    const std::int64_t plane = b.masks.shape()[1] * b.masks.shape()[2];
    const float* p = b.masks.data() + row * plane;
    return std::vector<float>(p, p + plane);
}

}  // namespace

TEST_CASE("[pipeline] nonzero equalization matches the direct CDF definition") {
    // Random volumes with exact zeros and negative values, several shapes.
    for (std::uint64_t seed : {31ull, 32ull, 33ull}) {
        const Tensor vox = random_voxels({4, 9, 11}, seed, 0.3);
        const Tensor eq = fae::data::equalize_nonzero(vox);
        const std::vector<float> want = oracle::equalize_nonzero_reference(to_vec(vox));
        REQUIRE(eq.numel() == static_cast<std::int64_t>(want.size()));
        for (std::int64_t i = 0; i < eq.numel(); ++i)
            CHECK(eq.data()[i] == want[static_cast<std::size_t>(i)]);
    }

    // Hand-worked example: nonzero values {1,2,3,4} land in bins {0,85,170,255},
    // so the running CDF maps them to exactly {0.25, 0.5, 0.75, 1}.
    Tensor small({1, 2, 3});
    const float vals[6] = {0.0f, 1.0f, 2.0f, 0.0f, 3.0f, 4.0f};
    std::copy(vals, vals + 6, small.data());
    const Tensor eq = fae::data::equalize_nonzero(small);
    CHECK(eq.data()[0] == 0.0f);
    CHECK(eq.data()[1] == 0.25f);
    CHECK(eq.data()[2] == 0.5f);
    CHECK(eq.data()[3] == 0.0f);
    CHECK(eq.data()[4] == 0.75f);
    CHECK(eq.data()[5] == 1.0f);

    // All-zero input stays all zero; a constant nonzero value maps to 1.
    const Tensor zeros = Tensor::full({2, 3, 3}, 0.0f);
    CHECK(fae::data::equalize_nonzero(zeros).max() == 0.0f);
    const Tensor flat = Tensor::full({2, 3, 3}, -2.5f);
    const Tensor eq_flat = fae::data::equalize_nonzero(flat);
    CHECK(eq_flat.min() == 1.0f);
    CHECK(eq_flat.max() == 1.0f);

    // Order-preserving on the nonzero values.
    const Tensor vox = random_voxels({3, 8, 8}, 55, 0.25);
    const Tensor mapped = fae::data::equalize_nonzero(vox);
    for (std::int64_t i = 0; i < vox.numel(); ++i) {
        for (std::int64_t j = 0; j < vox.numel(); ++j) {
            if (vox.data()[i] == 0.0f || vox.data()[j] == 0.0f) continue;
            if (vox.data()[i] < vox.data()[j]) CHECK(mapped.data()[i] <= mapped.data()[j]);
        }
    }
}

TEST_CASE("[pipeline] preprocessing equalizes globally, centers, and resizes") {
    Volume v;
    v.voxels = random_voxels({10, 5, 7}, 77, 0.2);
    v.id = "subject_a";

    const SliceBatch batch = fae::data::preprocess(v, 4, 16);
    CHECK(batch.images.shape() == std::vector<std::int64_t>{4, 1, 16, 16});
    CHECK(batch.size() == 4);
    CHECK_FALSE(batch.labeled());
    CHECK(batch.masks.numel() == 0);

    // Ten slices, four kept: the centered window starts at slice 3.
    REQUIRE(batch.ids.size() == 4);
    for (int s = 0; s < 4; ++s) {
        CHECK(batch.ids[static_cast<std::size_t>(s)].volume == "subject_a");
        CHECK(batch.ids[static_cast<std::size_t>(s)].slice == 3 + s);
    }

    // Equalization is global across the volume, then each kept slice is
    // sampled bilinearly; reproduce that pixel for pixel.
    const std::vector<float> eq = oracle::equalize_nonzero_reference(to_vec(v.voxels));
    for (int s = 0; s < 4; ++s) {
        const float* plane = eq.data() + (3 + s) * 5 * 7;
        for (int oy = 0; oy < 16; ++oy) {
            for (int ox = 0; ox < 16; ++ox) {
                const double sy = (oy + 0.5) * (5.0 / 16.0) - 0.5;
                const double sx = (ox + 0.5) * (7.0 / 16.0) - 0.5;
                const float want =
                    std::clamp(oracle::bilinear_at(plane, 5, 7, sy, sx), 0.0f, 1.0f);
                CHECK(batch.images.data()[(s * 16 + oy) * 16 + ox] == want);
            }
        }
    }

    // A window equal to the slice count starts at zero.
    Volume w;
    w.voxels = random_voxels({4, 5, 7}, 78, 0.2);
    w.id = "subject_b";
    const SliceBatch whole = fae::data::preprocess(w, 4, 16);
    CHECK(whole.ids.front().slice == 0);
    CHECK(whole.ids.back().slice == 3);

    // Odd counts keep the window centered: 9 slices, 4 kept, start at 2.
    Volume o;
    o.voxels = random_voxels({9, 5, 7}, 79, 0.2);
    CHECK(fae::data::preprocess(o, 4, 16).ids.front().slice == 2);

    CHECK_THROWS_AS(fae::data::preprocess(v, 11, 16), fae::RangeError);
    CHECK_THROWS_AS(fae::data::preprocess(v, 0, 16), fae::ContractError);
    CHECK_THROWS_AS(fae::data::preprocess(v, 4, 4), fae::ContractError);
    Volume flat;
    flat.voxels = Tensor({5, 7});
    CHECK_THROWS_AS(fae::data::preprocess(flat, 1, 16), fae::ContractError);
}

TEST_CASE("[pipeline] slice batches enforce their invariants") {
    CHECK_NOTHROW(make_valid_batch().validate());
    CHECK_NOTHROW(SliceBatch{}.validate());  // empty batch is fine

    {
        SliceBatch b = make_valid_batch();
        b.images = Tensor({3, 4, 4});  // missing channel axis
        CHECK_THROWS_AS(b.validate(), fae::ContractError);
    }
    {
        SliceBatch b = make_valid_batch();
        b.images = Tensor({3, 2, 4, 4});  // two channels
        CHECK_THROWS_AS(b.validate(), fae::ContractError);
    }
    {
        SliceBatch b = make_valid_batch();
        b.images.data()[0] = 1.5f;
        CHECK_THROWS_AS(b.validate(), fae::ContractError);
        b.images.data()[0] = -0.1f;
        CHECK_THROWS_AS(b.validate(), fae::ContractError);
        b.images.data()[0] = std::numeric_limits<float>::quiet_NaN();
        CHECK_THROWS_AS(b.validate(), fae::ContractError);
    }
    {
        SliceBatch b = make_valid_batch();
        b.ids.pop_back();
        CHECK_THROWS_AS(b.validate(), fae::ContractError);
    }
    {
        SliceBatch b = make_valid_batch();
        b.labels.push_back(0);
        CHECK_THROWS_AS(b.validate(), fae::ContractError);
        b.labels = {0, 2, 0};
        CHECK_THROWS_AS(b.validate(), fae::ContractError);
    }
    {
        SliceBatch b = make_valid_batch();
        b.masks = Tensor::full({3, 4, 5}, 0.0f);
        CHECK_THROWS_AS(b.validate(), fae::ContractError);
    }
    {
        SliceBatch b = make_valid_batch();
        b.masks.data()[1 * 16 + 5] = 0.5f;  // non-binary mask
        CHECK_THROWS_AS(b.validate(), fae::ContractError);
    }
    {
        SliceBatch b = make_valid_batch();
        b.labels = {0, 0, 0};  // mask says row 1 is anomalous, label disagrees
        CHECK_THROWS_AS(b.validate(), fae::ContractError);
        b.labels = {1, 1, 0};  // label 1 without mask support
        CHECK_THROWS_AS(b.validate(), fae::ContractError);
    }
    {
        SliceBatch b = make_valid_batch();  // masks without labels are allowed
        b.labels.clear();
        CHECK_NOTHROW(b.validate());
    }
}

TEST_CASE("[pipeline] row selection preserves slice content and metadata") {
    const SliceBatch b = make_valid_batch();

    const SliceBatch picked = fae::data::take_slices(b, {2, 0});
    CHECK(picked.size() == 2);
    CHECK(image_row(picked, 0) == image_row(b, 2));
    CHECK(image_row(picked, 1) == image_row(b, 0));
    CHECK(mask_row(picked, 0) == mask_row(b, 2));
    CHECK(picked.labels == std::vector<int>{0, 0});
    CHECK(picked.ids[0].slice == 2);
    CHECK(picked.ids[1].slice == 0);

    // Duplicates are allowed.
    const SliceBatch twice = fae::data::take_slices(b, {1, 1});
    CHECK(twice.size() == 2);
    CHECK(image_row(twice, 0) == image_row(b, 1));
    CHECK(image_row(twice, 1) == image_row(b, 1));
    CHECK(twice.labels == std::vector<int>{1, 1});

    // Empty selection yields an empty batch.
    const SliceBatch none = fae::data::take_slices(b, {});
    CHECK(none.size() == 0);
    CHECK(none.images.numel() == 0);

    // Unlabeled, maskless batches stay that way.
    SliceBatch plain = b;
    plain.labels.clear();
    plain.masks = Tensor();
    const SliceBatch p = fae::data::take_slices(plain, {0});
    CHECK(p.labels.empty());
    CHECK(p.masks.numel() == 0);

    CHECK_THROWS_AS(fae::data::take_slices(b, {3}), fae::ContractError);
    CHECK_THROWS_AS(fae::data::take_slices(b, {-1}), fae::ContractError);
}

TEST_CASE("[pipeline] volumes round-trip through the raw archive format") {
    const auto dir = test_dir();
    Volume v;
    v.voxels = random_voxels({3, 4, 5}, 91, 0.1);
    v.spacing = {1.5, 0.8, 0.625};
    v.id = "vol-xyz";
    const std::string path = (dir / "vol.ftar").string();
    fae::data::save_volume(v, path);

    const Volume r = fae::data::load_volume(path, fae::data::VolumeFormat::raw_tensor);
    CHECK(r.voxels.shape() == v.voxels.shape());
    CHECK(std::memcmp(r.voxels.data(), v.voxels.data(),
                      sizeof(float) * static_cast<std::size_t>(v.voxels.numel())) == 0);
    CHECK(r.spacing == v.spacing);
    CHECK(r.id == "vol-xyz");

    // 2-D payloads and non-finite voxels are rejected at load time.
    {
        fae::io::TensorArchive ar;
        ar.put("voxels", Tensor::full({4, 5}, 1.0f));
        const std::string p = (dir / "flat.ftar").string();
        ar.save(p);
        CHECK_THROWS_AS(fae::data::load_volume(p, fae::data::VolumeFormat::raw_tensor),
                        fae::FormatError);
    }
    {
        Tensor bad = Tensor::full({2, 3, 3}, 1.0f);
        bad.data()[4] = std::numeric_limits<float>::infinity();
        fae::io::TensorArchive ar;
        ar.put("voxels", bad);
        const std::string p = (dir / "inf.ftar").string();
        ar.save(p);
        CHECK_THROWS_AS(fae::data::load_volume(p, fae::data::VolumeFormat::raw_tensor),
                        fae::FormatError);
    }
    CHECK_THROWS_AS(
        fae::data::load_volume((dir / "absent.ftar").string(), fae::data::VolumeFormat::raw_tensor),
        fae::IoError);
    Volume flat;
    flat.voxels = Tensor({4, 5});
    CHECK_THROWS_AS(fae::data::save_volume(flat, (dir / "x.ftar").string()), fae::ContractError);
}

TEST_CASE("[pipeline] phantom volumes are deterministic and anatomically bounded") {
    const Volume a = fae::data::make_phantom_volume(2, 7);
    CHECK(a.voxels.shape() == std::vector<std::int64_t>{96, 160, 160});
    CHECK(a.id == "phantom_2");
    CHECK(a.voxels.all_finite());

    // Background is exactly zero, tissue sits in [0.05, 0.98].
    CHECK(a.voxels.data()[0] == 0.0f);  // corner voxel lies outside the body
    CHECK(a.voxels.min() == 0.0f);
    CHECK(a.voxels.max() <= 0.981f);
    CHECK(a.voxels.max() >= 0.5f);
    std::int64_t nonzero = 0;
    float smallest_tissue = 1.0f;
    for (std::int64_t i = 0; i < a.voxels.numel(); ++i) {
        if (a.voxels.data()[i] != 0.0f) {
            ++nonzero;
            smallest_tissue = std::min(smallest_tissue, a.voxels.data()[i]);
        }
    }
    const double frac = static_cast<double>(nonzero) / static_cast<double>(a.voxels.numel());
    CHECK(frac > 0.2);
    CHECK(frac < 0.55);
    CHECK(smallest_tissue >= 0.05f);

    const Volume a2 = fae::data::make_phantom_volume(2, 7);
    CHECK(std::memcmp(a.voxels.data(), a2.voxels.data(),
                      sizeof(float) * static_cast<std::size_t>(a.voxels.numel())) == 0);

    const Volume b = fae::data::make_phantom_volume(3, 7);
    const Volume c = fae::data::make_phantom_volume(2, 8);
    CHECK(std::memcmp(a.voxels.data(), b.voxels.data(),
                      sizeof(float) * static_cast<std::size_t>(a.voxels.numel())) != 0);
    CHECK(std::memcmp(a.voxels.data(), c.voxels.data(),
                      sizeof(float) * static_cast<std::size_t>(a.voxels.numel())) != 0);
}

TEST_CASE("[pipeline] dataset assembly splits volumes and injects anomalies") {
    const auto vols = synthetic_volumes(10, 6, 32, 400);
    const DatasetSplit split = fae::data::assemble_dataset(vols, 2024);

    // 10 volumes -> 7 train, 1 val, 2 test.
    CHECK(split.train.size() == 42);
    CHECK(split.val.size() == 6);
    CHECK(split.test.size() == 12);
    CHECK(split.seed == 2024);
    CHECK_NOTHROW(split.train.validate());
    CHECK_NOTHROW(split.val.validate());
    CHECK_NOTHROW(split.test.validate());

    // Train is labeled all-normal, carries no masks, and is byte-identical to
    // the source volumes.
    CHECK(split.train.labeled());
    CHECK(std::count(split.train.labels.begin(), split.train.labels.end(), 0) == 42);
    CHECK(split.train.masks.numel() == 0);
    CHECK(image_row(split.train, 0) == image_row(vols[0], 0));
    CHECK(image_row(split.train, 41) == image_row(vols[6], 5));
    CHECK(split.train.ids.front().volume == "vol_0");
    CHECK(split.train.ids.back().volume == "vol_6");

    CHECK(split.val.ids.front().volume == "vol_7");
    CHECK(split.test.ids.front().volume == "vol_8");
    CHECK(split.test.ids.back().volume == "vol_9");

    // Half of each evaluation volume's slices carry one anomaly.
    CHECK(std::count(split.val.labels.begin(), split.val.labels.end(), 1) == 3);
    const auto ones_in = [&](const SliceBatch& b, std::int64_t from, std::int64_t to) {
        int n = 0;
        for (std::int64_t i = from; i < to; ++i) n += b.labels[static_cast<std::size_t>(i)];
        return n;
    };
    CHECK(ones_in(split.test, 0, 6) == 3);
    CHECK(ones_in(split.test, 6, 12) == 3);

    // Normal rows are untouched; anomalous rows changed and carry a mask.
    for (std::int64_t i = 0; i < split.test.size(); ++i) {
        const std::size_t vol_idx = 8 + static_cast<std::size_t>(i / 6);
        const std::int64_t row_in_vol = i % 6;
        const auto original = image_row(vols[vol_idx], row_in_vol);
        const auto mask = mask_row(split.test, i);
        const double mask_area = std::accumulate(mask.begin(), mask.end(), 0.0);
        if (split.test.labels[static_cast<std::size_t>(i)] == 0) {
            CHECK(image_row(split.test, i) == original);
            CHECK(mask_area == 0.0);
        } else {
            CHECK(image_row(split.test, i) != original);
            CHECK(mask_area > 0.0);
        }
    }

    // 50 volumes reproduce the published-scale split: 40 train, 1 val, 9 test.
    const auto many = synthetic_volumes(50, 2, 32, 401);
    const DatasetSplit big = fae::data::assemble_dataset(many, 9);
    CHECK(big.train.size() == 80);
    CHECK(big.val.size() == 2);
    CHECK(big.test.size() == 18);

    // Three volumes is the minimum: one per split.
    const auto three = synthetic_volumes(3, 6, 32, 402);
    const DatasetSplit tiny = fae::data::assemble_dataset(three, 10);
    CHECK(tiny.train.size() == 6);
    CHECK(tiny.val.size() == 6);
    CHECK(tiny.test.size() == 6);

    CHECK_THROWS_AS(fae::data::assemble_dataset(synthetic_volumes(2, 6, 32, 403), 1),
                    fae::RangeError);
    CHECK_THROWS_AS(fae::data::assemble_dataset(synthetic_volumes(3, 1, 32, 404), 1),
                    fae::RangeError);
    auto uneven = synthetic_volumes(3, 6, 32, 405);
    uneven[1] = fae::data::take_slices(uneven[1], {0, 1, 2});
    CHECK_THROWS_AS(fae::data::assemble_dataset(uneven, 1), fae::ContractError);
}

TEST_CASE("[pipeline] dataset assembly is reproducible per seed") {
    const auto vols = synthetic_volumes(6, 6, 32, 500);
    const DatasetSplit a = fae::data::assemble_dataset(vols, 31);
    const DatasetSplit b = fae::data::assemble_dataset(vols, 31);
    CHECK(a.test.labels == b.test.labels);
    CHECK(std::memcmp(a.test.images.data(), b.test.images.data(),
                      sizeof(float) * static_cast<std::size_t>(a.test.images.numel())) == 0);
    CHECK(std::memcmp(a.test.masks.data(), b.test.masks.data(),
                      sizeof(float) * static_cast<std::size_t>(a.test.masks.numel())) == 0);
    CHECK(std::memcmp(a.val.images.data(), b.val.images.data(),
                      sizeof(float) * static_cast<std::size_t>(a.val.images.numel())) == 0);

    const DatasetSplit c = fae::data::assemble_dataset(vols, 32);
    const bool images_differ =
        std::memcmp(a.test.images.data(), c.test.images.data(),
                    sizeof(float) * static_cast<std::size_t>(a.test.images.numel())) != 0;
    CHECK((images_differ || a.test.labels != c.test.labels));
}

TEST_CASE("[pipeline] phantom dataset assembles end to end") {
    const DatasetSplit d = fae::data::make_phantom_dataset(3, 11);
    CHECK(d.train.size() == 80);
    CHECK(d.val.size() == 80);
    CHECK(d.test.size() == 80);
    CHECK(d.train.images.shape() == std::vector<std::int64_t>{80, 1, 128, 128});
    CHECK_NOTHROW(d.train.validate());
    CHECK_NOTHROW(d.val.validate());
    CHECK_NOTHROW(d.test.validate());

    for (const auto& id : d.train.ids) CHECK(id.volume == "phantom_0");
    CHECK(d.val.ids.front().volume == "phantom_1");
    CHECK(d.test.ids.front().volume == "phantom_2");

    // 96 slices, 80 kept: the centered window covers slices 8..87.
    CHECK(d.train.ids.front().slice == 8);
    CHECK(d.train.ids.back().slice == 87);

    CHECK(std::count(d.val.labels.begin(), d.val.labels.end(), 1) == 40);
    CHECK(std::count(d.test.labels.begin(), d.test.labels.end(), 1) == 40);
    CHECK(std::count(d.train.labels.begin(), d.train.labels.end(), 0) == 80);

    const DatasetSplit d2 = fae::data::make_phantom_dataset(3, 11);
    CHECK(std::memcmp(d.test.images.data(), d2.test.images.data(),
                      sizeof(float) * static_cast<std::size_t>(d.test.images.numel())) == 0);

    CHECK_THROWS_AS(fae::data::make_phantom_dataset(2, 11), fae::RangeError);
}
