#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fae/data/pipeline.hpp"
#include "fae/eval/metrics.hpp"
#include "fae/features/backbone.hpp"
#include "fae/models/models.hpp"
#include "fae/scoring/scoring.hpp"
#include "fae/ssim/ssim.hpp"
#include "nlohmann/json.hpp"

namespace fae::eval {

struct MetricTriple {
    double pixel_ap = 0.0;
    double dice_at_5fpr = 0.0;
    double image_auroc = 0.0;
};

nlohmann::json triple_to_json(const MetricTriple& t);
MetricTriple triple_from_json(const nlohmann::json& j);

// Pairwise significance of one method against a named baseline, per metric.
struct SignificanceEntry {
    std::string versus;
    WelchResult pixel_ap;
    WelchResult dice_at_5fpr;
    WelchResult image_auroc;
};

struct EvalReport {
    std::string method;
    std::string selection;  // layer-selection string, empty when not applicable
    std::vector<MetricTriple> per_seed;
    MetricTriple mean;
    MetricTriple stddev;   // sample standard deviation over seeds (0 for n = 1)
    int n_seeds = 0;
    std::string config_hash;  // hex fingerprint of the experiment config
    std::vector<SignificanceEntry> significance;
};

// Computes mean/std and validates the report invariants (metrics in [0,1],
// n_seeds = len(per_seed) >= 1).
EvalReport make_report(const std::string& method, const std::string& selection,
                       const std::vector<MetricTriple>& per_seed,
                       const std::string& config_hash);

nlohmann::json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

// CSV rows in the results-table layout: method, selection, then one
// "mean±std" column per metric.
std::string report_csv_header();
std::string report_csv_row(const EvalReport& r);

// Scores a batch of labeled test slices: pixel maps at mask resolution plus
// one scalar per slice. Lets tests drive the evaluator with stub scorers.
using BatchScorer = std::function<scoring::AnomalyMapBatch(const data::SliceBatch&)>;

// Pools pixel scores and labels over the WHOLE test set (one global
// computation, never per-slice averaging), computes image AUROC from the
// per-slice scores, and returns the metric triple. The test batch must carry
// labels and masks; otherwise throws ContractError.
MetricTriple evaluate_scores(const data::SliceBatch& test, const BatchScorer& scorer,
                             std::int64_t batch_size = 16, double fpr = 0.05);

// Full-pipeline evaluation of a trained model: (optionally) extract backbone
// features, reconstruct, score with SSIM at the given dynamic range, upsample
// to mask resolution, and pool. `backbone`/`selection` must be set exactly for
// feature-space model kinds.
MetricTriple evaluate_model(models::Model& model, const data::SliceBatch& test,
                            const features::Backbone* backbone,
                            const features::LayerSelection* selection,
                            ssim::SsimConfig ssim_cfg, const scoring::ScoreConfig& score_cfg,
                            double dynamic_range, std::int64_t batch_size = 16);

// The constant-scorer floor used for the "random" baseline row: every pixel
// and every image receives the same score.
MetricTriple evaluate_constant_floor(const data::SliceBatch& test);

}  // namespace fae::eval
