#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fae/data/pipeline.hpp"
#include "fae/eval/report.hpp"
#include "fae/features/backbone.hpp"
#include "fae/models/models.hpp"
#include "fae/scoring/scoring.hpp"
#include "fae/ssim/ssim.hpp"
#include "fae/train/train.hpp"
#include "nlohmann/json.hpp"

namespace fae::runner {

// Name of the environment variable pointing at a directory of backbone weight
// archives; consulted when the config's backbone.weights is empty.
inline constexpr const char* kBackboneDirEnv = "FAE_BACKBONE_DIR";
inline constexpr const char* kBackboneArchiveName = "resnet18.ftar";

struct DatasetConfig {
    std::string kind = "phantom";  // "phantom" | "nifti_dir"
    int n_volumes = 8;             // phantom only
    std::uint64_t seed = 7;
    std::string path;              // nifti_dir only
    int slices_per_volume = 80;
    int slice_size = 128;
};

struct BackboneConfig {
    std::string weights;  // archive path; empty -> env dir, then seeded random
    std::uint64_t random_seed = 1234;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    std::vector<models::ModelKind> model_kinds{models::ModelKind::feature_ae};
    std::vector<features::LayerSelection> layer_selections;  // default {0,1,2}
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    train::TrainConfig train;  // template; batch_size 0 = per-kind default
    bool loss_explicit = false;  // false: loss follows the model kind
    ssim::SsimConfig ssim;
    scoring::ScoreConfig scoring;
    BackboneConfig backbone;
    bool feature_cache = true;  // disk-cache extracted features for speed
    std::string output_dir = "runs/experiment";
    int workers = 1;

    // Throws ConfigError on any violation.
    void validate() const;
};

// Strict parsing: unknown keys, wrong types, and invalid values all raise
// ConfigError (the CLI maps that to exit code 2).
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// Fingerprint over the canonical config serialization, excluding output_dir
// and workers (neither changes any computed result). 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

struct RunOutcome {
    int n_cells = 0;
    int n_failed = 0;
    std::vector<eval::EvalReport> reports;  // aggregate rows, table order
};

// Full experiment matrix: one cell per (model kind, layer selection, seed)
// with per-cell failure isolation and resume markers; writes report.json,
// table.csv, figure data + PNG, and a hash manifest under cfg.output_dir.
RunOutcome run_experiment(const ExperimentConfig& cfg);

// Layer-selection ablation: feature_ae only, selections fixed to
// {0}, {0,1}, {0,1,2}, {0,1,2,3}; adds ablation.json with fused feature
// geometry and per-metric selection rankings.
RunOutcome run_ablation(ExperimentConfig cfg);

// Pretty-prints the report stored in a run directory. Returns 0, or 1 when
// the directory holds failed cells.
int report_dir(const std::string& dir, std::ostream& out);

// Recomputes every manifest hash. Returns 0 when all match, 1 otherwise.
int verify_dir(const std::string& dir, std::ostream& out);

// 64-bit FNV-1a over a file's bytes, as 16 lowercase hex digits.
std::string hash_file(const std::string& path);

}  // namespace fae::runner
