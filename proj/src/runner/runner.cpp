#include "fae/runner/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "fae/common.hpp"
#include "fae/io/png.hpp"
#include "fae/parallel.hpp"
#include "fae/rng.hpp"

namespace fs = std::filesystem;

namespace fae::runner {

namespace {

std::string to_hex16(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("write failed for " + path);
}

nlohmann::json parse_json_file(const std::string& path) {
    return nlohmann::json::parse(read_text(path));
}

void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto& item : j.items())
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
            throw ConfigError(where + ": unknown key \"" + item.key() + "\"");
}

}  // namespace

std::string hash_file(const std::string& path) {
    return to_hex16(fnv1a(read_text(path)));
}

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
    try {
        if (dataset.kind != "phantom" && dataset.kind != "nifti_dir")
            throw ConfigError("dataset.kind must be \"phantom\" or \"nifti_dir\"");
        if (dataset.kind == "phantom" && dataset.n_volumes < 3)
            throw ConfigError("dataset.n_volumes must be at least 3");
        if (dataset.kind == "nifti_dir" && dataset.path.empty())
            throw ConfigError("dataset.path is required for nifti_dir datasets");
        if (dataset.slices_per_volume < 2) throw ConfigError("dataset.slices_per_volume too small");
        if (dataset.slice_size < 16 || dataset.slice_size % 16 != 0)
            throw ConfigError("dataset.slice_size must be a positive multiple of 16");
        if (model_kinds.empty()) throw ConfigError("model_kinds must not be empty");
        for (std::size_t i = 0; i < model_kinds.size(); ++i)
            for (std::size_t k = i + 1; k < model_kinds.size(); ++k)
                if (model_kinds[i] == model_kinds[k])
                    throw ConfigError("model_kinds contains duplicates");
        if (layer_selections.empty()) throw ConfigError("layer_selections must not be empty");
        for (const auto& sel : layer_selections) sel.validate();
        for (std::size_t i = 0; i < layer_selections.size(); ++i)
            for (std::size_t k = i + 1; k < layer_selections.size(); ++k)
                if (layer_selections[i].to_string() == layer_selections[k].to_string())
                    throw ConfigError("layer_selections contains duplicates");
        if (seeds.empty()) throw ConfigError("seeds must not be empty");
        for (std::size_t i = 0; i < seeds.size(); ++i)
            for (std::size_t k = i + 1; k < seeds.size(); ++k)
                if (seeds[i] == seeds[k]) throw ConfigError("seeds contains duplicates");
        if (!(train.lr > 0.0)) throw ConfigError("train.lr must be positive");
        if (train.batch_size < 0) throw ConfigError("train.batch_size must be >= 0 (0 = default)");
        if (train.steps < 1) throw ConfigError("train.steps must be >= 1");
        if (train.val_interval < 1) throw ConfigError("train.val_interval must be >= 1");
        if (train.range_calibration_steps < 1)
            throw ConfigError("train.range_calibration_steps must be >= 1");
        ssim.validate();
        if (scoring.topk < 1) throw ConfigError("scoring.topk must be >= 1");
        if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
        if (workers < 1) throw ConfigError("workers must be >= 1");
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
    try {
        reject_unknown_keys(j, {"dataset", "model_kinds", "layer_selections", "seeds", "train",
                                "ssim", "scoring", "backbone", "feature_cache", "output_dir",
                                "workers"},
                            "config");
        ExperimentConfig cfg;
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            reject_unknown_keys(
                d, {"kind", "n_volumes", "seed", "path", "slices_per_volume", "slice_size"},
                "dataset");
            if (d.contains("kind")) cfg.dataset.kind = d.at("kind").get<std::string>();
            if (d.contains("n_volumes")) cfg.dataset.n_volumes = d.at("n_volumes").get<int>();
            if (d.contains("seed")) cfg.dataset.seed = d.at("seed").get<std::uint64_t>();
            if (d.contains("path")) cfg.dataset.path = d.at("path").get<std::string>();
            if (d.contains("slices_per_volume"))
                cfg.dataset.slices_per_volume = d.at("slices_per_volume").get<int>();
            if (d.contains("slice_size")) cfg.dataset.slice_size = d.at("slice_size").get<int>();
        }
        if (j.contains("model_kinds")) {
            cfg.model_kinds.clear();
            for (const auto& k : j.at("model_kinds"))
                cfg.model_kinds.push_back(models::model_kind_from_name(k.get<std::string>()));
        }
        if (j.contains("layer_selections")) {
            for (const auto& s : j.at("layer_selections"))
                cfg.layer_selections.push_back(features::LayerSelection::parse(s.get<std::string>()));
        }
        if (cfg.layer_selections.empty())
            cfg.layer_selections.push_back(features::LayerSelection::parse("0,1,2"));
        if (j.contains("seeds")) {
            cfg.seeds.clear();
            for (const auto& s : j.at("seeds")) cfg.seeds.push_back(s.get<std::uint64_t>());
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            reject_unknown_keys(
                t, {"lr", "batch_size", "steps", "loss", "val_interval", "range_calibration_steps"},
                "train");
            if (t.contains("lr")) cfg.train.lr = t.at("lr").get<double>();
            if (t.contains("batch_size")) cfg.train.batch_size = t.at("batch_size").get<std::int64_t>();
            else cfg.train.batch_size = 0;
            if (t.contains("steps")) cfg.train.steps = t.at("steps").get<std::int64_t>();
            if (t.contains("loss")) {
                const std::string name = t.at("loss").get<std::string>();
                if (name != "auto") {
                    cfg.train.loss = train::loss_kind_from_name(name);
                    cfg.loss_explicit = true;
                }
            }
            if (t.contains("val_interval"))
                cfg.train.val_interval = t.at("val_interval").get<std::int64_t>();
            if (t.contains("range_calibration_steps"))
                cfg.train.range_calibration_steps =
                    t.at("range_calibration_steps").get<std::int64_t>();
        } else {
            cfg.train.batch_size = 0;
        }
        if (j.contains("ssim")) {
            const auto& s = j.at("ssim");
            reject_unknown_keys(s, {"window_size", "window", "sigma", "k1", "k2"}, "ssim");
            if (s.contains("window_size")) cfg.ssim.window_size = s.at("window_size").get<int>();
            if (s.contains("window"))
                cfg.ssim.window = ssim::window_kind_from_name(s.at("window").get<std::string>());
            if (s.contains("sigma")) cfg.ssim.sigma = s.at("sigma").get<double>();
            if (s.contains("k1")) cfg.ssim.k1 = s.at("k1").get<double>();
            if (s.contains("k2")) cfg.ssim.k2 = s.at("k2").get<double>();
        }
        if (j.contains("scoring")) {
            const auto& s = j.at("scoring");
            reject_unknown_keys(s, {"reducer", "topk"}, "scoring");
            if (s.contains("reducer"))
                cfg.scoring.reducer = scoring::reducer_from_name(s.at("reducer").get<std::string>());
            if (s.contains("topk")) cfg.scoring.topk = s.at("topk").get<std::int64_t>();
        }
        if (j.contains("backbone")) {
            const auto& b = j.at("backbone");
            reject_unknown_keys(b, {"weights", "random_seed"}, "backbone");
            if (b.contains("weights")) cfg.backbone.weights = b.at("weights").get<std::string>();
            if (b.contains("random_seed"))
                cfg.backbone.random_seed = b.at("random_seed").get<std::uint64_t>();
        }
        if (j.contains("feature_cache")) cfg.feature_cache = j.at("feature_cache").get<bool>();
        if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
        if (j.contains("workers")) cfg.workers = j.at("workers").get<int>();
        cfg.validate();
        return cfg;
    } catch (const ConfigError&) {
        throw;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

ExperimentConfig load_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = parse_json_file(path);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return config_from_json(j);
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json dataset{{"kind", cfg.dataset.kind},
                           {"seed", cfg.dataset.seed},
                           {"slices_per_volume", cfg.dataset.slices_per_volume},
                           {"slice_size", cfg.dataset.slice_size}};
    if (cfg.dataset.kind == "phantom") dataset["n_volumes"] = cfg.dataset.n_volumes;
    if (cfg.dataset.kind == "nifti_dir") dataset["path"] = cfg.dataset.path;

    nlohmann::json kinds = nlohmann::json::array();
    for (models::ModelKind k : cfg.model_kinds) kinds.push_back(models::model_kind_name(k));
    nlohmann::json sels = nlohmann::json::array();
    for (const auto& s : cfg.layer_selections) sels.push_back(s.to_string());

    return nlohmann::json{
        {"dataset", dataset},
        {"model_kinds", kinds},
        {"layer_selections", sels},
        {"seeds", cfg.seeds},
        {"train",
         {{"lr", cfg.train.lr},
          {"batch_size", cfg.train.batch_size},
          {"steps", cfg.train.steps},
          {"loss", cfg.loss_explicit ? train::loss_kind_name(cfg.train.loss) : "auto"},
          {"val_interval", cfg.train.val_interval},
          {"range_calibration_steps", cfg.train.range_calibration_steps}}},
        {"ssim",
         {{"window_size", cfg.ssim.window_size},
          {"window", ssim::window_kind_name(cfg.ssim.window)},
          {"sigma", cfg.ssim.sigma},
          {"k1", cfg.ssim.k1},
          {"k2", cfg.ssim.k2}}},
        {"scoring",
         {{"reducer", scoring::reducer_name(cfg.scoring.reducer)}, {"topk", cfg.scoring.topk}}},
        {"backbone",
         {{"weights", cfg.backbone.weights}, {"random_seed", cfg.backbone.random_seed}}},
        {"feature_cache", cfg.feature_cache},
        {"output_dir", cfg.output_dir},
        {"workers", cfg.workers}};
}

std::string config_hash(const ExperimentConfig& cfg) {
    nlohmann::json canonical = config_to_json(cfg);
    // Neither field changes any computed value, only where results land and
    // how many threads compute them.
    canonical.erase("output_dir");
    canonical.erase("workers");
    return to_hex16(fnv1a(canonical.dump()));
}

// ---------------------------------------------------------------------------
// Dataset and backbone resolution

namespace {

data::DatasetSplit load_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset.kind == "phantom")
        return data::make_phantom_dataset(cfg.dataset.n_volumes, cfg.dataset.seed);

    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(cfg.dataset.path)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.ends_with(".nii") || name.ends_with(".nii.gz"))
            paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.size() < 3)
        throw IoError(cfg.dataset.path + ": found " + std::to_string(paths.size()) +
                      " NIfTI volumes, need at least 3");
    std::vector<data::SliceBatch> per_volume;
    per_volume.reserve(paths.size());
    for (const std::string& p : paths)
        per_volume.push_back(data::preprocess(data::load_volume(p, data::VolumeFormat::nifti),
                                              cfg.dataset.slices_per_volume,
                                              cfg.dataset.slice_size));
    return data::assemble_dataset(per_volume, cfg.dataset.seed);
}

features::Backbone resolve_backbone(const ExperimentConfig& cfg) {
    std::string weights = cfg.backbone.weights;
    if (weights.empty()) {
        if (const char* dir = std::getenv(kBackboneDirEnv); dir != nullptr && *dir != '\0') {
            const fs::path candidate = fs::path(dir) / kBackboneArchiveName;
            if (fs::exists(candidate)) weights = candidate.string();
        }
    }
    if (!weights.empty()) return features::Backbone::from_archive(weights);
    return features::Backbone::random_init(cfg.backbone.random_seed);
}

// ---------------------------------------------------------------------------
// Bar chart rendering (three metric groups, one bar per table row)

void draw_bar_chart(const std::vector<eval::EvalReport>& rows, const std::string& png_path) {
    if (rows.empty()) return;
    constexpr int kBarW = 18, kBarGap = 4, kGroupGap = 36;
    constexpr int kLeft = 50, kRight = 20, kTop = 20, kBottom = 30, kPlotH = 300;
    const int n_rows = static_cast<int>(rows.size());
    const int group_w = n_rows * kBarW + (n_rows - 1) * kBarGap;
    const int width = kLeft + 3 * group_w + 2 * kGroupGap + kRight;
    const int height = kTop + kPlotH + kBottom;

    std::vector<std::uint8_t> img(static_cast<std::size_t>(width) * height * 3, 255);
    const auto put = [&](int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        if (x < 0 || y < 0 || x >= width || y >= height) return;
        const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
        img[o] = r;
        img[o + 1] = g;
        img[o + 2] = b;
    };
    const auto y_of = [&](double v) {
        return kTop + static_cast<int>(std::lround((1.0 - std::clamp(v, 0.0, 1.0)) * kPlotH));
    };

    // Gridlines at 0, 0.25, 0.5, 0.75, 1 plus the two axes.
    for (int g = 0; g <= 4; ++g) {
        const int y = y_of(0.25 * g);
        for (int x = kLeft; x < width - kRight; ++x) put(x, y, 220, 220, 220);
    }
    for (int y = kTop; y <= kTop + kPlotH; ++y) put(kLeft, y, 0, 0, 0);
    for (int x = kLeft; x < width - kRight; ++x) put(x, kTop + kPlotH, 0, 0, 0);

    constexpr std::uint8_t kPalette[8][3] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},
                                             {214, 39, 40},  {148, 103, 189}, {140, 86, 75},
                                             {227, 119, 194}, {127, 127, 127}};
    for (int metric = 0; metric < 3; ++metric) {
        const int group_x = kLeft + 8 + metric * (group_w + kGroupGap);
        for (int r = 0; r < n_rows; ++r) {
            const eval::MetricTriple& mean = rows[static_cast<std::size_t>(r)].mean;
            const eval::MetricTriple& sd = rows[static_cast<std::size_t>(r)].stddev;
            const double m = metric == 0   ? mean.pixel_ap
                             : metric == 1 ? mean.dice_at_5fpr
                                           : mean.image_auroc;
            const double s = metric == 0   ? sd.pixel_ap
                             : metric == 1 ? sd.dice_at_5fpr
                                           : sd.image_auroc;
            const auto* color = kPalette[r % 8];
            const int x0 = group_x + r * (kBarW + kBarGap);
            for (int y = y_of(m); y < kTop + kPlotH; ++y)
                for (int x = x0; x < x0 + kBarW; ++x) put(x, y, color[0], color[1], color[2]);
            // Error bar with end caps.
            const int cx = x0 + kBarW / 2;
            for (int y = y_of(m + s); y <= y_of(std::max(0.0, m - s)); ++y) put(cx, y, 0, 0, 0);
            for (int dx = -3; dx <= 3; ++dx) {
                put(cx + dx, y_of(m + s), 0, 0, 0);
                put(cx + dx, y_of(std::max(0.0, m - s)), 0, 0, 0);
            }
        }
    }
    io::write_png_rgb8(png_path, img, width, height);
}

// ---------------------------------------------------------------------------
// The run matrix

struct Cell {
    models::ModelKind kind;
    features::LayerSelection selection;
    std::uint64_t seed = 0;
    std::string name;
    std::string dir;
    bool completed = false;
    bool failed = false;
    eval::MetricTriple metrics;
};

std::string cell_name(models::ModelKind kind, const features::LayerSelection& sel,
                      std::uint64_t seed) {
    std::string s = sel.to_string();
    std::replace(s.begin(), s.end(), ',', '-');
    return models::model_kind_name(kind) + "_sel" + s + "_seed" + std::to_string(seed);
}

// One (kind, selection, seed) training + evaluation cell. Throws on failure;
// the caller isolates.
eval::MetricTriple run_cell(const ExperimentConfig& cfg, const Cell& cell,
                            const data::DatasetSplit& split, const features::Backbone& backbone,
                            const std::string& hash) {
    const bool feature_space = models::is_feature_space(cell.kind);
    const bool dfr = cell.kind == models::ModelKind::dfr_style ||
                     cell.kind == models::ModelKind::dfr_style_ssim;
    const std::int64_t size = split.train.images.shape()[2];

    std::array<std::int64_t, 3> chw{1, size, size};
    if (feature_space) {
        const features::FusedGeometry g = features::output_geometry(cell.selection, size);
        chw = {g.channels, g.height, g.width};
    }
    models::Model model = models::build_model(cell.kind, chw, cell.seed);

    train::TrainConfig tc = cfg.train;
    tc.seed = cell.seed;
    tc.ssim = cfg.ssim;
    tc.loss = cfg.loss_explicit ? cfg.train.loss : train::default_loss_for(cell.kind);
    if (tc.batch_size <= 0) tc.batch_size = dfr ? 4 : 64;
    tc.feature_cache_dir =
        (cfg.feature_cache && feature_space) ? cfg.output_dir + "/feature_cache" : "";
    tc.log_path = cell.dir + "/train_log.ndjson";
    tc.validate();

    train::TrainState state = train::train(std::move(model), split, feature_space ? &backbone : nullptr,
                                           feature_space ? &cell.selection : nullptr, tc);

    models::save_checkpoint(state.model, state.dynamic_range, cell.dir + "/checkpoint.ftar", hash);
    nlohmann::json curve{{"cell", cell.name},
                         {"seed", cell.seed},
                         {"config_hash", hash},
                         {"points", nlohmann::json::parse(train::curve_to_json(state.curve))}};
    write_text(cell.dir + "/curve.json", curve.dump(2) + "\n");

    const eval::MetricTriple triple = eval::evaluate_model(
        state.model, split.test, &backbone, &cell.selection, cfg.ssim, cfg.scoring,
        state.dynamic_range);

    nlohmann::json metrics{{"cell", cell.name},
                           {"kind", models::model_kind_name(cell.kind)},
                           {"selection", cell.selection.to_string()},
                           {"seed", cell.seed},
                           {"config_hash", hash},
                           {"dynamic_range", state.dynamic_range},
                           {"best_step", state.best_step},
                           {"metrics", eval::triple_to_json(triple)}};
    write_text(cell.dir + "/metrics.json", metrics.dump(2) + "\n");
    return triple;
}

struct MatrixResult {
    std::vector<Cell> cells;
    std::vector<eval::EvalReport> reports;  // table order, random row first
    int n_failed = 0;
};

void write_manifest(const ExperimentConfig& cfg, const std::string& hash) {
    nlohmann::json files = nlohmann::json::object();
    std::vector<std::string> paths;
    for (const auto& entry : fs::recursive_directory_iterator(cfg.output_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel =
            fs::relative(entry.path(), cfg.output_dir).generic_string();
        if (rel == "manifest.json") continue;
        if (rel.starts_with("feature_cache/")) continue;  // derived speed cache
        paths.push_back(rel);
    }
    std::sort(paths.begin(), paths.end());
    for (const std::string& rel : paths)
        files[rel] = hash_file(cfg.output_dir + "/" + rel);
    nlohmann::json manifest{
        {"algorithm", "fnv1a64"}, {"config_hash", hash}, {"files", files}};
    write_text(cfg.output_dir + "/manifest.json", manifest.dump(2) + "\n");
}

MatrixResult run_matrix(const ExperimentConfig& cfg) {
    cfg.validate();
    set_worker_count(cfg.workers);
    const std::string hash = config_hash(cfg);

    fs::create_directories(cfg.output_dir);
    nlohmann::json canonical = config_to_json(cfg);
    canonical.erase("output_dir");
    canonical.erase("workers");
    write_text(cfg.output_dir + "/config.json", canonical.dump(2) + "\n");

    const data::DatasetSplit split = load_dataset(cfg);
    const features::Backbone backbone = resolve_backbone(cfg);

    MatrixResult result;
    for (models::ModelKind kind : cfg.model_kinds)
        for (const features::LayerSelection& sel : cfg.layer_selections)
            for (std::uint64_t seed : cfg.seeds) {
                Cell cell;
                cell.kind = kind;
                cell.selection = sel;
                cell.seed = seed;
                cell.name = cell_name(kind, sel, seed);
                cell.dir = cfg.output_dir + "/cells/" + cell.name;
                result.cells.push_back(std::move(cell));
            }

    std::size_t index = 0;
    for (Cell& cell : result.cells) {
        ++index;
        const std::string tag =
            "[" + std::to_string(index) + "/" + std::to_string(result.cells.size()) + "] " +
            cell.name;
        // Resume: a done marker with the current config hash means the cell's
        // artifacts are already final.
        const std::string done_path = cell.dir + "/done.json";
        const std::string failed_path = cell.dir + "/failed.json";
        if (fs::exists(done_path)) {
            try {
                const nlohmann::json done = parse_json_file(done_path);
                if (done.at("config_hash").get<std::string>() == hash) {
                    const nlohmann::json metrics = parse_json_file(cell.dir + "/metrics.json");
                    cell.metrics = eval::triple_from_json(metrics.at("metrics"));
                    cell.completed = true;
                    std::fprintf(stderr, "%s already complete, skipping\n", tag.c_str());
                    continue;
                }
            } catch (const std::exception&) {
                // Stale or unreadable marker: fall through and recompute.
            }
        }
        fs::create_directories(cell.dir);
        fs::remove(done_path);
        fs::remove(failed_path);
        std::fprintf(stderr, "%s training...\n", tag.c_str());
        try {
            cell.metrics = run_cell(cfg, cell, split, backbone, hash);
            cell.completed = true;
            nlohmann::json done{{"cell", cell.name}, {"config_hash", hash}};
            write_text(done_path, done.dump(2) + "\n");
            std::fprintf(stderr, "%s done: pixel_ap %.4f dice %.4f auroc %.4f\n", tag.c_str(),
                         cell.metrics.pixel_ap, cell.metrics.dice_at_5fpr,
                         cell.metrics.image_auroc);
        } catch (const std::exception& e) {
            cell.failed = true;
            ++result.n_failed;
            nlohmann::json failed{
                {"cell", cell.name}, {"config_hash", hash}, {"error", e.what()}};
            write_text(failed_path, failed.dump(2) + "\n");
            std::fprintf(stderr, "%s FAILED: %s\n", tag.c_str(), e.what());
        }
    }

    // Constant-score floor, identical for every seed by construction.
    const eval::MetricTriple floor = eval::evaluate_constant_floor(split.test);
    result.reports.push_back(eval::make_report(
        "random", "", std::vector<eval::MetricTriple>(cfg.seeds.size(), floor), hash));

    for (models::ModelKind kind : cfg.model_kinds)
        for (const features::LayerSelection& sel : cfg.layer_selections) {
            std::vector<eval::MetricTriple> per_seed;
            for (const Cell& cell : result.cells)
                if (cell.kind == kind && cell.selection.to_string() == sel.to_string() &&
                    cell.completed)
                    per_seed.push_back(cell.metrics);
            if (per_seed.empty()) continue;  // every seed failed
            result.reports.push_back(eval::make_report(models::model_kind_name(kind),
                                                       sel.to_string(), per_seed, hash));
        }

    // Significance: the convolutional feature model against every baseline row
    // (matching selection, plus the selection-free random floor).
    const std::string proposed = models::model_kind_name(models::ModelKind::feature_ae);
    for (eval::EvalReport& row : result.reports) {
        if (row.method != proposed || row.per_seed.size() < 2) continue;
        const auto values = [](const std::vector<eval::MetricTriple>& ts, int which) {
            std::vector<double> v;
            for (const auto& t : ts)
                v.push_back(which == 0 ? t.pixel_ap : which == 1 ? t.dice_at_5fpr : t.image_auroc);
            return v;
        };
        for (const eval::EvalReport& other : result.reports) {
            if (other.method == proposed) continue;
            if (!other.selection.empty() && other.selection != row.selection) continue;
            if (other.per_seed.size() < 2) continue;
            eval::SignificanceEntry entry;
            entry.versus = other.method;
            entry.pixel_ap =
                eval::welch_t_test(values(row.per_seed, 0), values(other.per_seed, 0));
            entry.dice_at_5fpr =
                eval::welch_t_test(values(row.per_seed, 1), values(other.per_seed, 1));
            entry.image_auroc =
                eval::welch_t_test(values(row.per_seed, 2), values(other.per_seed, 2));
            row.significance.push_back(std::move(entry));
        }
    }
    return result;
}

void write_common_outputs(const ExperimentConfig& cfg, const std::string& hash,
                          const MatrixResult& result) {
    nlohmann::json rows = nlohmann::json::array();
    for (const eval::EvalReport& r : result.reports) rows.push_back(eval::report_to_json(r));
    write_text(cfg.output_dir + "/report.json",
               nlohmann::json{{"config_hash", hash}, {"rows", rows}}.dump(2) + "\n");

    std::string csv = eval::report_csv_header();
    for (const eval::EvalReport& r : result.reports) csv += eval::report_csv_row(r);
    write_text(cfg.output_dir + "/table.csv", csv);

    fs::create_directories(cfg.output_dir + "/figures");
    std::string bars = "method,selection,metric,mean,std\n";
    const char* metric_names[3] = {"pixel_ap", "dice_at_5fpr", "image_auroc"};
    for (const eval::EvalReport& r : result.reports)
        for (int m = 0; m < 3; ++m) {
            const double mean = m == 0   ? r.mean.pixel_ap
                                : m == 1 ? r.mean.dice_at_5fpr
                                         : r.mean.image_auroc;
            const double sd = m == 0   ? r.stddev.pixel_ap
                              : m == 1 ? r.stddev.dice_at_5fpr
                                       : r.stddev.image_auroc;
            char line[256];
            std::snprintf(line, sizeof(line), "%s,%s,%s,%.6f,%.6f\n", r.method.c_str(),
                          r.selection.c_str(), metric_names[m], mean, sd);
            bars += line;
        }
    write_text(cfg.output_dir + "/figures/bar_chart.csv", bars);
    try {
        draw_bar_chart(result.reports, cfg.output_dir + "/figures/bar_chart.png");
    } catch (const std::exception&) {
        // Figure rendering is best-effort; the CSV carries the data.
    }

    nlohmann::json cells = nlohmann::json::array();
    for (const Cell& c : result.cells)
        cells.push_back(nlohmann::json{{"name", c.name},
                                       {"status", c.completed ? "done" : "failed"}});
    nlohmann::json run{{"config_hash", hash},
                       {"n_cells", static_cast<int>(result.cells.size())},
                       {"n_failed", result.n_failed},
                       {"cells", cells}};
    write_text(cfg.output_dir + "/run.json", run.dump(2) + "\n");
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg) {
    const std::string hash = config_hash(cfg);
    const MatrixResult result = run_matrix(cfg);
    write_common_outputs(cfg, hash, result);
    write_manifest(cfg, hash);
    RunOutcome outcome;
    outcome.n_cells = static_cast<int>(result.cells.size());
    outcome.n_failed = result.n_failed;
    outcome.reports = result.reports;
    return outcome;
}

RunOutcome run_ablation(ExperimentConfig cfg) {
    cfg.model_kinds = {models::ModelKind::feature_ae};
    cfg.layer_selections = {
        features::LayerSelection::parse("0"), features::LayerSelection::parse("0,1"),
        features::LayerSelection::parse("0,1,2"), features::LayerSelection::parse("0,1,2,3")};
    const std::string hash = config_hash(cfg);
    const MatrixResult result = run_matrix(cfg);
    write_common_outputs(cfg, hash, result);

    const std::int64_t size = cfg.dataset.kind == "phantom" ? 128 : cfg.dataset.slice_size;
    nlohmann::json rows = nlohmann::json::array();
    for (const eval::EvalReport& r : result.reports) {
        if (r.method != models::model_kind_name(models::ModelKind::feature_ae)) continue;
        const features::FusedGeometry g =
            features::output_geometry(features::LayerSelection::parse(r.selection), size);
        rows.push_back(nlohmann::json{{"selection", r.selection},
                                      {"geometry", std::to_string(g.channels) + "x" +
                                                       std::to_string(g.height) + "x" +
                                                       std::to_string(g.width)},
                                      {"mean", eval::triple_to_json(r.mean)},
                                      {"std", eval::triple_to_json(r.stddev)},
                                      {"n_seeds", r.n_seeds}});
    }
    // Per-metric ranking of selections, best mean first; ties keep row order.
    nlohmann::json rankings = nlohmann::json::object();
    const char* metric_names[3] = {"pixel_ap", "dice_at_5fpr", "image_auroc"};
    for (int m = 0; m < 3; ++m) {
        std::vector<std::pair<double, std::string>> order;
        for (const eval::EvalReport& r : result.reports) {
            if (r.method != models::model_kind_name(models::ModelKind::feature_ae)) continue;
            const double mean = m == 0   ? r.mean.pixel_ap
                                : m == 1 ? r.mean.dice_at_5fpr
                                         : r.mean.image_auroc;
            order.emplace_back(mean, r.selection);
        }
        std::stable_sort(order.begin(), order.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        nlohmann::json ranked = nlohmann::json::array();
        for (const auto& [mean, sel] : order) ranked.push_back(sel);
        rankings[metric_names[m]] = ranked;
    }
    write_text(cfg.output_dir + "/ablation.json",
               nlohmann::json{{"config_hash", hash}, {"rows", rows}, {"rankings", rankings}}
                       .dump(2) +
                   "\n");

    write_manifest(cfg, hash);
    RunOutcome outcome;
    outcome.n_cells = static_cast<int>(result.cells.size());
    outcome.n_failed = result.n_failed;
    outcome.reports = result.reports;
    return outcome;
}

int report_dir(const std::string& dir, std::ostream& out) {
    const nlohmann::json report = parse_json_file(dir + "/report.json");
    out << "config " << report.at("config_hash").get<std::string>() << "\n\n";
    char line[256];
    std::snprintf(line, sizeof(line), "%-16s %-10s %-17s %-17s %-17s\n", "method", "selection",
                  "pixel_ap", "dice_at_5fpr", "image_auroc");
    out << line;
    for (const auto& row : report.at("rows")) {
        const eval::EvalReport r = eval::report_from_json(row);
        char cell[3][32];
        std::snprintf(cell[0], sizeof(cell[0]), "%.4f±%.4f", r.mean.pixel_ap, r.stddev.pixel_ap);
        std::snprintf(cell[1], sizeof(cell[1]), "%.4f±%.4f", r.mean.dice_at_5fpr,
                      r.stddev.dice_at_5fpr);
        std::snprintf(cell[2], sizeof(cell[2]), "%.4f±%.4f", r.mean.image_auroc,
                      r.stddev.image_auroc);
        std::snprintf(line, sizeof(line), "%-16s %-10s %-17s %-17s %-17s\n", r.method.c_str(),
                      r.selection.empty() ? "-" : r.selection.c_str(), cell[0], cell[1], cell[2]);
        out << line;
    }
    bool printed_sig_header = false;
    for (const auto& row : report.at("rows")) {
        const eval::EvalReport r = eval::report_from_json(row);
        for (const eval::SignificanceEntry& e : r.significance) {
            if (!printed_sig_header) {
                out << "\nWelch t-tests, " << r.method << " vs baselines (two-sided p):\n";
                printed_sig_header = true;
            }
            std::snprintf(line, sizeof(line),
                          "  vs %-12s pixel_ap p=%.3g  dice p=%.3g  auroc p=%.3g\n",
                          e.versus.c_str(), e.pixel_ap.p, e.dice_at_5fpr.p, e.image_auroc.p);
            out << line;
        }
    }
    if (fs::exists(dir + "/ablation.json")) {
        const nlohmann::json ablation = parse_json_file(dir + "/ablation.json");
        out << "\nlayer-selection ablation:\n";
        for (const auto& row : ablation.at("rows")) {
            std::snprintf(line, sizeof(line), "  layers %-8s %-10s pixel_ap %.4f\n",
                          row.at("selection").get<std::string>().c_str(),
                          row.at("geometry").get<std::string>().c_str(),
                          row.at("mean").at("pixel_ap").get<double>());
            out << line;
        }
        out << "  ranking by pixel_ap:";
        for (const auto& sel : ablation.at("rankings").at("pixel_ap"))
            out << " " << sel.get<std::string>();
        out << "\n";
    }
    int n_failed = 0;
    if (fs::exists(dir + "/run.json"))
        n_failed = parse_json_file(dir + "/run.json").at("n_failed").get<int>();
    if (n_failed > 0) out << "\n" << n_failed << " cell(s) FAILED\n";
    return n_failed > 0 ? 1 : 0;
}

int verify_dir(const std::string& dir, std::ostream& out) {
    nlohmann::json manifest;
    try {
        manifest = parse_json_file(dir + "/manifest.json");
    } catch (const std::exception& e) {
        out << "verify: cannot read manifest: " << e.what() << "\n";
        return 1;
    }
    int mismatches = 0;
    int checked = 0;
    for (const auto& item : manifest.at("files").items()) {
        const std::string path = dir + "/" + item.key();
        ++checked;
        std::string actual;
        try {
            actual = hash_file(path);
        } catch (const std::exception&) {
            out << "MISSING  " << item.key() << "\n";
            ++mismatches;
            continue;
        }
        if (actual != item.value().get<std::string>()) {
            out << "MISMATCH " << item.key() << " expected " << item.value().get<std::string>()
                << " got " << actual << "\n";
            ++mismatches;
        }
    }
    if (mismatches == 0) {
        out << "verified " << checked << " files, all hashes match (config "
            << manifest.at("config_hash").get<std::string>() << ")\n";
        return 0;
    }
    out << mismatches << " of " << checked << " files failed verification\n";
    return 1;
}

}  // namespace fae::runner
