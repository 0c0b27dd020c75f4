#include "fae/eval/report.hpp"

#include <cmath>
#include <cstdio>

#include "fae/common.hpp"

namespace fae::eval {

nlohmann::json triple_to_json(const MetricTriple& t) {
    return nlohmann::json{{"pixel_ap", t.pixel_ap},
                          {"dice_at_5fpr", t.dice_at_5fpr},
                          {"image_auroc", t.image_auroc}};
}

MetricTriple triple_from_json(const nlohmann::json& j) {
    MetricTriple t;
    t.pixel_ap = j.at("pixel_ap").get<double>();
    t.dice_at_5fpr = j.at("dice_at_5fpr").get<double>();
    t.image_auroc = j.at("image_auroc").get<double>();
    return t;
}

namespace {

void check_unit_interval(double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError(std::string("report: ") + what + " outside [0, 1]");
}

nlohmann::json welch_to_json(const WelchResult& w) {
    return nlohmann::json{{"t", w.t}, {"p", w.p}, {"df", w.df}};
}

WelchResult welch_from_json(const nlohmann::json& j) {
    WelchResult w;
    w.t = j.at("t").get<double>();
    w.p = j.at("p").get<double>();
    w.df = j.at("df").get<double>();
    return w;
}

}  // namespace

EvalReport make_report(const std::string& method, const std::string& selection,
                       const std::vector<MetricTriple>& per_seed,
                       const std::string& config_hash) {
    if (per_seed.empty()) throw ContractError("report: needs at least one seed");
    EvalReport r;
    r.method = method;
    r.selection = selection;
    r.per_seed = per_seed;
    r.n_seeds = static_cast<int>(per_seed.size());
    r.config_hash = config_hash;

    const double n = static_cast<double>(per_seed.size());
    for (const MetricTriple& t : per_seed) {
        check_unit_interval(t.pixel_ap, "pixel_ap");
        check_unit_interval(t.dice_at_5fpr, "dice_at_5fpr");
        check_unit_interval(t.image_auroc, "image_auroc");
        r.mean.pixel_ap += t.pixel_ap;
        r.mean.dice_at_5fpr += t.dice_at_5fpr;
        r.mean.image_auroc += t.image_auroc;
    }
    r.mean.pixel_ap /= n;
    r.mean.dice_at_5fpr /= n;
    r.mean.image_auroc /= n;

    if (per_seed.size() >= 2) {
        MetricTriple ss;
        for (const MetricTriple& t : per_seed) {
            ss.pixel_ap += (t.pixel_ap - r.mean.pixel_ap) * (t.pixel_ap - r.mean.pixel_ap);
            ss.dice_at_5fpr +=
                (t.dice_at_5fpr - r.mean.dice_at_5fpr) * (t.dice_at_5fpr - r.mean.dice_at_5fpr);
            ss.image_auroc +=
                (t.image_auroc - r.mean.image_auroc) * (t.image_auroc - r.mean.image_auroc);
        }
        r.stddev.pixel_ap = std::sqrt(ss.pixel_ap / (n - 1.0));
        r.stddev.dice_at_5fpr = std::sqrt(ss.dice_at_5fpr / (n - 1.0));
        r.stddev.image_auroc = std::sqrt(ss.image_auroc / (n - 1.0));
    }
    return r;
}

nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json per_seed = nlohmann::json::array();
    for (const MetricTriple& t : r.per_seed) per_seed.push_back(triple_to_json(t));
    nlohmann::json j{{"method", r.method},
                     {"selection", r.selection},
                     {"per_seed", per_seed},
                     {"mean", triple_to_json(r.mean)},
                     {"std", triple_to_json(r.stddev)},
                     {"n_seeds", r.n_seeds},
                     {"config_hash", r.config_hash}};
    if (!r.significance.empty()) {
        nlohmann::json sig = nlohmann::json::array();
        for (const SignificanceEntry& e : r.significance)
            sig.push_back(nlohmann::json{{"versus", e.versus},
                                         {"pixel_ap", welch_to_json(e.pixel_ap)},
                                         {"dice_at_5fpr", welch_to_json(e.dice_at_5fpr)},
                                         {"image_auroc", welch_to_json(e.image_auroc)}});
        j["significance"] = sig;
    }
    return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
    std::vector<MetricTriple> per_seed;
    for (const auto& t : j.at("per_seed")) per_seed.push_back(triple_from_json(t));
    EvalReport r = make_report(j.at("method").get<std::string>(),
                               j.at("selection").get<std::string>(), per_seed,
                               j.at("config_hash").get<std::string>());
    if (r.n_seeds != j.at("n_seeds").get<int>())
        throw FormatError("report: n_seeds does not match per_seed length");
    if (j.contains("significance"))
        for (const auto& e : j.at("significance"))
            r.significance.push_back(SignificanceEntry{e.at("versus").get<std::string>(),
                                                       welch_from_json(e.at("pixel_ap")),
                                                       welch_from_json(e.at("dice_at_5fpr")),
                                                       welch_from_json(e.at("image_auroc"))});
    return r;
}

std::string report_csv_header() {
    return "method,selection,pixel_ap,dice_at_5fpr,image_auroc\n";
}

std::string report_csv_row(const EvalReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%s,%.4f±%.4f,%.4f±%.4f,%.4f±%.4f\n", r.method.c_str(),
                  r.selection.c_str(), r.mean.pixel_ap, r.stddev.pixel_ap, r.mean.dice_at_5fpr,
                  r.stddev.dice_at_5fpr, r.mean.image_auroc, r.stddev.image_auroc);
    return buf;
}

MetricTriple evaluate_scores(const data::SliceBatch& test, const BatchScorer& scorer,
                             std::int64_t batch_size, double fpr) {
    test.validate();
    if (!test.labeled() || test.masks.empty())
        throw ContractError("evaluation: test data must carry labels and masks");
    if (batch_size < 1) throw ContractError("evaluation: batch size must be positive");
    const std::int64_t n = test.size();
    const std::int64_t s = test.masks.shape()[1];

    std::vector<double> pixel_scores;
    std::vector<std::uint8_t> pixel_labels;
    pixel_scores.reserve(static_cast<std::size_t>(n * s * s));
    pixel_labels.reserve(static_cast<std::size_t>(n * s * s));
    std::vector<double> image_scores;
    std::vector<std::uint8_t> image_labels;
    image_scores.reserve(static_cast<std::size_t>(n));
    image_labels.reserve(static_cast<std::size_t>(n));

    for (std::int64_t start = 0; start < n; start += batch_size) {
        const std::int64_t stop = std::min(n, start + batch_size);
        std::vector<std::int64_t> rows;
        for (std::int64_t r = start; r < stop; ++r) rows.push_back(r);
        const data::SliceBatch batch = data::take_slices(test, rows);
        const scoring::AnomalyMapBatch out = scorer(batch);
        if (out.pixel_scores.rank() != 3 || out.pixel_scores.shape()[0] != stop - start ||
            out.pixel_scores.shape()[1] != s || out.pixel_scores.shape()[2] != s)
            throw ContractError("evaluation: scorer map shape does not match masks");
        if (static_cast<std::int64_t>(out.image_scores.size()) != stop - start)
            throw ContractError("evaluation: scorer image-score count mismatch");
        for (std::int64_t i = 0; i < out.pixel_scores.numel(); ++i) {
            pixel_scores.push_back(out.pixel_scores[static_cast<std::size_t>(i)]);
            const std::int64_t global = (start * s * s) + i;
            pixel_labels.push_back(test.masks[static_cast<std::size_t>(global)] != 0.0f ? 1 : 0);
        }
        for (std::int64_t i = 0; i < stop - start; ++i) {
            image_scores.push_back(out.image_scores[static_cast<std::size_t>(i)]);
            image_labels.push_back(static_cast<std::uint8_t>(test.labels[static_cast<std::size_t>(start + i)]));
        }
    }

    MetricTriple t;
    t.pixel_ap = pixel_ap(pixel_scores, pixel_labels);
    t.dice_at_5fpr = dice_at_fpr(pixel_scores, pixel_labels, fpr);
    t.image_auroc = image_auroc(image_scores, image_labels);
    return t;
}

MetricTriple evaluate_model(models::Model& model, const data::SliceBatch& test,
                            const features::Backbone* backbone,
                            const features::LayerSelection* selection,
                            ssim::SsimConfig ssim_cfg, const scoring::ScoreConfig& score_cfg,
                            double dynamic_range, std::int64_t batch_size) {
    const bool feature_space = models::is_feature_space(model.kind);
    if (feature_space && (backbone == nullptr || selection == nullptr))
        throw ContractError("evaluation: feature-space model needs a backbone and selection");
    if (!(dynamic_range > 0.0)) throw ContractError("evaluation: dynamic range must be positive");
    ssim_cfg.dynamic_range = dynamic_range;
    ssim_cfg.validate();

    scoring::ScoreConfig cfg = score_cfg;
    cfg.target_size = test.masks.shape()[1];

    const BatchScorer scorer = [&](const data::SliceBatch& batch) {
        Tensor x = feature_space ? backbone->extract(batch.images, *selection).features
                                 : batch.images;
        const Tensor recon = model.reconstruct(x);
        return scoring::anomaly_map(x, recon, ssim_cfg, cfg, batch.ids);
    };
    return evaluate_scores(test, scorer, batch_size);
}

MetricTriple evaluate_constant_floor(const data::SliceBatch& test) {
    const BatchScorer scorer = [&](const data::SliceBatch& batch) {
        scoring::AnomalyMapBatch out;
        const std::int64_t s = test.masks.shape()[1];
        out.pixel_scores = Tensor::full({batch.size(), s, s}, 0.5f);
        out.image_scores.assign(static_cast<std::size_t>(batch.size()), 0.5);
        out.ids = batch.ids;
        return out;
    };
    return evaluate_scores(test, scorer, 64);
}

}  // namespace fae::eval
