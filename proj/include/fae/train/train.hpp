#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fae/data/pipeline.hpp"
#include "fae/features/backbone.hpp"
#include "fae/models/models.hpp"
#include "fae/ssim/ssim.hpp"

namespace fae::train {

enum class LossKind { one_minus_mssim, mse };

std::string loss_kind_name(LossKind k);
LossKind loss_kind_from_name(const std::string& name);
LossKind default_loss_for(models::ModelKind kind);

struct TrainConfig {
    double lr = 2e-4;
    std::int64_t batch_size = 64;       // 4 for dfr-style kinds
    std::int64_t steps = 10000;
    LossKind loss = LossKind::one_minus_mssim;
    std::uint64_t seed = 0;
    std::int64_t val_interval = 200;
    std::int64_t range_calibration_steps = 100;  // L frozen afterwards
    ssim::SsimConfig ssim;                        // dynamic_range overridden by calibration
    // Extracted features spilled to a disk file and reused for every epoch
    // (and by later runs with the same key); empty disables caching.
    std::string feature_cache_dir;
    std::string log_path;  // line-delimited JSON training log; empty disables

    void validate() const;
};

struct CurvePoint {
    std::int64_t step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    bool has_val = false;
};

struct TrainState {
    models::Model model;
    std::int64_t step = 0;
    double dynamic_range = 1.0;
    std::vector<CurvePoint> curve;
    // Best-validation snapshot, diagnostics only; final weights are in model.
    std::vector<Tensor> best_snapshot;
    double best_val_loss = 0.0;
    std::int64_t best_step = 0;
};

// Trains on data.train (which must be normal-only; anything labeled anomalous
// raises DataContractError). Feature-space models require backbone+selection;
// image models must pass neither. Deterministic in (data, cfg, model seed).
TrainState train(models::Model model, const data::DatasetSplit& data,
                 const features::Backbone* backbone, const features::LayerSelection* selection,
                 const TrainConfig& cfg);

std::vector<CurvePoint> training_curve(const TrainState& state);
std::string curve_to_json(const std::vector<CurvePoint>& curve);
std::vector<CurvePoint> curve_from_json(const std::string& text);

// Fixed-record float32 slice store on disk, so multi-gigabyte feature sets
// never live in memory.
class FeatureCacheFile {
  public:
    // Opens an existing complete cache or creates an empty one to be filled.
    FeatureCacheFile(const std::string& path, std::int64_t n, std::int64_t c, std::int64_t h,
                     std::int64_t w);
    ~FeatureCacheFile();
    FeatureCacheFile(const FeatureCacheFile&) = delete;
    FeatureCacheFile& operator=(const FeatureCacheFile&) = delete;

    bool complete() const { return complete_; }
    void write_slice(std::int64_t index, const float* data);
    void mark_complete();
    // Gathers rows into a [rows.size(), c, h, w] batch.
    Tensor read_batch(const std::vector<std::int64_t>& rows) const;
    std::int64_t slice_count() const { return n_; }
    std::array<std::int64_t, 3> chw() const { return {c_, h_, w_}; }

  private:
    std::string path_;
    std::int64_t n_, c_, h_, w_;
    bool complete_ = false;
    mutable void* file_ = nullptr;  // FILE*
};

// Extracts features for every slice of `batch` through the cache (filling it
// on first use) or directly when cache_dir is empty. Returns the cache when
// caching, otherwise the features in memory.
struct FeatureSource {
    std::unique_ptr<FeatureCacheFile> cache;      // disk cache, when enabled
    Tensor in_memory;                             // [N, C, H, W] raw images
    const data::SliceBatch* slices = nullptr;     // on-the-fly extraction path
    const features::Backbone* backbone = nullptr; // (keeps memory bounded)
    const features::LayerSelection* selection = nullptr;
    std::array<std::int64_t, 3> chw{0, 0, 0};

    Tensor batch(const std::vector<std::int64_t>& rows) const;
};

FeatureSource make_feature_source(const data::SliceBatch& slices,
                                  const features::Backbone& backbone,
                                  const features::LayerSelection& selection,
                                  const std::string& cache_dir, const std::string& cache_tag);

}  // namespace fae::train
