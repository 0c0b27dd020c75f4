#include "fae/train/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fae/rng.hpp"

namespace fae::train {

std::string loss_kind_name(LossKind k) {
    return k == LossKind::one_minus_mssim ? "one_minus_mssim" : "mse";
}

LossKind loss_kind_from_name(const std::string& name) {
    if (name == "one_minus_mssim") return LossKind::one_minus_mssim;
    if (name == "mse") return LossKind::mse;
    throw ConfigError("unknown loss kind: " + name);
}

LossKind default_loss_for(models::ModelKind kind) {
    return models::uses_mssim_loss(kind) ? LossKind::one_minus_mssim : LossKind::mse;
}

void TrainConfig::validate() const {
    if (lr <= 0.0) throw ContractError("train config: lr must be positive");
    if (steps < 1) throw ContractError("train config: steps must be >= 1");
    if (batch_size < 1) throw ContractError("train config: batch_size must be >= 1");
    if (val_interval < 1) throw ContractError("train config: val_interval must be >= 1");
    if (range_calibration_steps < 1)
        throw ContractError("train config: range_calibration_steps must be >= 1");
    ssim.validate();
}

// ---------------------------------------------------------------------------
// Feature cache

namespace {

constexpr std::uint64_t kCacheMagic = 0x46414543414348ull;  // "FAECACH"

struct CacheHeader {
    std::uint64_t magic;
    std::int64_t n, c, h, w;
    std::uint64_t complete;
};

}  // namespace

FeatureCacheFile::FeatureCacheFile(const std::string& path, std::int64_t n, std::int64_t c,
                                   std::int64_t h, std::int64_t w)
    : path_(path), n_(n), c_(c), h_(h), w_(w) {
    if (std::filesystem::exists(path)) {
        std::FILE* f = std::fopen(path.c_str(), "r+b");
        if (!f) throw IoError("feature cache: cannot open " + path);
        CacheHeader hdr{};
        if (std::fread(&hdr, sizeof(hdr), 1, f) == 1 && hdr.magic == kCacheMagic && hdr.n == n &&
            hdr.c == c && hdr.h == h && hdr.w == w && hdr.complete == 1) {
            complete_ = true;
            file_ = f;
            return;
        }
        std::fclose(f);  // stale or mismatched: rebuild below
    }
    std::FILE* f = std::fopen(path.c_str(), "w+b");
    if (!f) throw IoError("feature cache: cannot create " + path);
    CacheHeader hdr{kCacheMagic, n, c, h, w, 0};
    if (std::fwrite(&hdr, sizeof(hdr), 1, f) != 1)
        throw IoError("feature cache: header write failed");
    file_ = f;
}

FeatureCacheFile::~FeatureCacheFile() {
    if (file_) std::fclose(static_cast<std::FILE*>(file_));
}

void FeatureCacheFile::write_slice(std::int64_t index, const float* data) {
    if (index < 0 || index >= n_) throw ContractError("feature cache: index out of range");
    std::FILE* f = static_cast<std::FILE*>(file_);
    const std::int64_t record = c_ * h_ * w_;
    const std::int64_t off = static_cast<std::int64_t>(sizeof(CacheHeader)) +
                             index * record * static_cast<std::int64_t>(sizeof(float));
    if (std::fseek(f, static_cast<long>(off), SEEK_SET) != 0 ||
        std::fwrite(data, sizeof(float), static_cast<std::size_t>(record), f) !=
            static_cast<std::size_t>(record))
        throw IoError("feature cache: write failed at slice " + std::to_string(index));
}

void FeatureCacheFile::mark_complete() {
    std::FILE* f = static_cast<std::FILE*>(file_);
    CacheHeader hdr{kCacheMagic, n_, c_, h_, w_, 1};
    if (std::fseek(f, 0, SEEK_SET) != 0 || std::fwrite(&hdr, sizeof(hdr), 1, f) != 1)
        throw IoError("feature cache: completion mark failed");
    std::fflush(f);
    complete_ = true;
}

Tensor FeatureCacheFile::read_batch(const std::vector<std::int64_t>& rows) const {
    std::FILE* f = static_cast<std::FILE*>(file_);
    const std::int64_t record = c_ * h_ * w_;
    Tensor out({static_cast<std::int64_t>(rows.size()), c_, h_, w_});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::int64_t r = rows[i];
        if (r < 0 || r >= n_) throw ContractError("feature cache: row out of range");
        const std::int64_t off = static_cast<std::int64_t>(sizeof(CacheHeader)) +
                                 r * record * static_cast<std::int64_t>(sizeof(float));
        if (std::fseek(f, static_cast<long>(off), SEEK_SET) != 0 ||
            std::fread(out.data() + static_cast<std::int64_t>(i) * record, sizeof(float),
                       static_cast<std::size_t>(record), f) != static_cast<std::size_t>(record))
            throw IoError("feature cache: read failed at slice " + std::to_string(r));
    }
    return out;
}

Tensor FeatureSource::batch(const std::vector<std::int64_t>& rows) const {
    if (cache) return cache->read_batch(rows);
    if (backbone != nullptr)
        return backbone->extract(data::take_slices(*slices, rows).images, *selection).features;
    const std::int64_t record = chw[0] * chw[1] * chw[2];
    Tensor out({static_cast<std::int64_t>(rows.size()), chw[0], chw[1], chw[2]});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::int64_t r = rows[i];
        std::copy(in_memory.data() + r * record, in_memory.data() + (r + 1) * record,
                  out.data() + static_cast<std::int64_t>(i) * record);
    }
    return out;
}

FeatureSource make_feature_source(const data::SliceBatch& slices,
                                  const features::Backbone& backbone,
                                  const features::LayerSelection& selection,
                                  const std::string& cache_dir, const std::string& cache_tag) {
    const std::int64_t n = slices.size();
    if (n == 0) throw ContractError("feature source: empty slice batch");
    const std::int64_t s = slices.images.shape()[2];
    const features::FusedGeometry geom = features::output_geometry(selection, s);

    FeatureSource src;
    src.chw = {geom.channels, geom.height, geom.width};

    constexpr std::int64_t kExtractBatch = 16;
    const auto extract_range = [&](std::int64_t lo, std::int64_t hi, auto&& sink) {
        std::vector<std::int64_t> rows;
        for (std::int64_t b = lo; b < hi; b += kExtractBatch) {
            const std::int64_t e = std::min(hi, b + kExtractBatch);
            rows.clear();
            for (std::int64_t r = b; r < e; ++r) rows.push_back(r);
            const data::SliceBatch part = data::take_slices(slices, rows);
            const features::FeatureStack fs = backbone.extract(part.images, selection);
            sink(b, fs.features);
        }
    };

    if (cache_dir.empty()) {
        // No cache requested: extract on the fly per batch, bounded memory.
        src.slices = &slices;
        src.backbone = &backbone;
        src.selection = &selection;
        return src;
    }

    std::filesystem::create_directories(cache_dir);
    const std::string path = cache_dir + "/" + cache_tag + ".feat";
    src.cache = std::make_unique<FeatureCacheFile>(path, n, geom.channels, geom.height,
                                                   geom.width);
    if (!src.cache->complete()) {
        const std::int64_t record = geom.channels * geom.height * geom.width;
        extract_range(0, n, [&](std::int64_t base, const Tensor& feats) {
            const std::int64_t m = feats.shape()[0];
            for (std::int64_t i = 0; i < m; ++i)
                src.cache->write_slice(base + i, feats.data() + i * record);
        });
        src.cache->mark_complete();
    }
    return src;
}

// ---------------------------------------------------------------------------
// Adam

namespace {

class Adam {
  public:
    Adam(std::vector<nn::Param*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
        for (nn::Param* p : params_) {
            m_.push_back(Tensor::full(p->value.shape(), 0.0f));
            v_.push_back(Tensor::full(p->value.shape(), 0.0f));
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            float* w = params_[i]->value.data();
            const float* g = params_[i]->grad.data();
            float* m = m_[static_cast<std::size_t>(i)].data();
            float* v = v_[static_cast<std::size_t>(i)].data();
            const std::int64_t n = params_[i]->value.numel();
            for (std::int64_t j = 0; j < n; ++j) {
                const double gj = g[j];
                const double mj = b1_ * m[j] + (1.0 - b1_) * gj;
                const double vj = b2_ * v[j] + (1.0 - b2_) * gj * gj;
                m[j] = static_cast<float>(mj);
                v[j] = static_cast<float>(vj);
                const double mhat = mj / bc1;
                const double vhat = vj / bc2;
                w[j] = static_cast<float>(w[j] - lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

  private:
    std::vector<nn::Param*> params_;
    double lr_, b1_, b2_, eps_;
    std::vector<Tensor> m_, v_;
    std::int64_t t_ = 0;
};

double mse_loss_with_grad(const Tensor& target, const Tensor& recon, Tensor* drecon) {
    if (target.shape() != recon.shape()) throw ContractError("mse: shape mismatch");
    const std::int64_t n = target.numel();
    if (drecon) *drecon = Tensor(recon.shape());
    double sum = 0.0;
    const float* t = target.data();
    const float* r = recon.data();
    const double inv = 1.0 / static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(r[i]) - static_cast<double>(t[i]);
        sum += d * d;
        if (drecon) drecon->data()[i] = static_cast<float>(2.0 * d * inv);
    }
    return sum * inv;
}

}  // namespace

TrainState train(models::Model model, const data::DatasetSplit& data,
                 const features::Backbone* backbone, const features::LayerSelection* selection,
                 const TrainConfig& cfg) {
    cfg.validate();
    const bool feature_space = models::is_feature_space(model.kind);
    if (feature_space != (backbone != nullptr) || feature_space != (selection != nullptr))
        throw ContractError("train: feature-space models require backbone and selection, "
                            "image-space models must not get them");
    if (!data.train.labeled())
        throw DataContractError("train: training slices must carry (all-normal) labels");
    for (int l : data.train.labels)
        if (l != 0) throw DataContractError("train: anomalous slice in the training stream");
    if (cfg.loss != default_loss_for(model.kind))
        throw ContractError("train: loss kind does not match the model kind");

    const std::int64_t n_train = data.train.size();
    if (n_train < cfg.batch_size)
        throw ContractError("train: fewer training slices than one batch");

    // Normal-only validation subset (anomalous val slices would pollute the
    // reconstruction loss signal).
    std::vector<std::int64_t> val_rows;
    for (std::int64_t i = 0; i < data.val.size(); ++i)
        if (data.val.labels.empty() || data.val.labels[static_cast<std::size_t>(i)] == 0)
            val_rows.push_back(i);

    // Feature sources (disk-cached when requested).
    FeatureSource train_src, val_src;
    if (feature_space) {
        train_src = make_feature_source(data.train, *backbone, *selection, cfg.feature_cache_dir,
                                        "train_" + selection->to_string());
        if (!val_rows.empty())
            val_src = make_feature_source(data.val, *backbone, *selection, cfg.feature_cache_dir,
                                          "val_" + selection->to_string());
    } else {
        auto image_source = [](const data::SliceBatch& b) {
            FeatureSource s;
            s.in_memory = b.images;
            s.chw = {b.images.shape()[1], b.images.shape()[2], b.images.shape()[3]};
            return s;
        };
        train_src = image_source(data.train);
        if (!val_rows.empty()) val_src = image_source(data.val);
    }

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path);
        if (!log) throw IoError("train: cannot open log file " + cfg.log_path);
    }

    TrainState state;
    state.model = std::move(model);
    nn::Network& net = state.model.net;
    Adam adam(net.params(), cfg.lr);

    ssim::RangeCalibrator calibrator;
    ssim::SsimConfig live_ssim = cfg.ssim;
    // Every feature-space model calibrates L (scoring needs it even when the
    // training loss is MSE); image space is already [0,1] so L stays 1.
    const bool calibrate = feature_space;
    if (!feature_space) live_ssim.dynamic_range = 1.0;
    state.dynamic_range = live_ssim.dynamic_range;

    const auto compute_loss = [&](const Tensor& target, const Tensor& recon, Tensor* grad) {
        if (cfg.loss == LossKind::mse) return mse_loss_with_grad(target, recon, grad);
        // Single-precision structural loss: the training loop dominates the
        // run time and tolerates a few ulps of slack.
        const double m = ssim::mssim_with_grad_f32(target, recon, live_ssim, nullptr, grad);
        if (grad) {
            float* g = grad->data();
            for (std::int64_t i = 0; i < grad->numel(); ++i) g[i] = -g[i];
        }
        return 1.0 - m;
    };

    const auto validate_loss = [&]() {
        if (val_rows.empty()) return 0.0;
        double total = 0.0;
        std::int64_t seen = 0;
        for (std::size_t i = 0; i < val_rows.size(); i += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<std::int64_t> rows(
                val_rows.begin() + static_cast<std::ptrdiff_t>(i),
                val_rows.begin() +
                    static_cast<std::ptrdiff_t>(std::min(val_rows.size(),
                                                         i + static_cast<std::size_t>(cfg.batch_size))));
            // Rows are positions within the val split; the source indexes the
            // same order.
            Tensor x = val_src.batch(rows);
            Tensor y = net.forward(x, false);
            total += compute_loss(x, y, nullptr) * static_cast<double>(rows.size());
            seen += static_cast<std::int64_t>(rows.size());
        }
        return total / static_cast<double>(seen);
    };

    // Deterministic epoch shuffling; remainder batches are dropped so every
    // step sees a full batch.
    std::vector<std::int64_t> order;
    std::int64_t epoch = 0, pos = 0;
    const auto next_batch_rows = [&]() {
        if (order.empty() || pos + cfg.batch_size > static_cast<std::int64_t>(order.size())) {
            Rng shuffle(derive_seed(cfg.seed, "batch-order", static_cast<std::uint64_t>(epoch++)));
            const auto perm = shuffle.permutation(static_cast<std::size_t>(n_train));
            order.assign(perm.begin(), perm.end());
            pos = 0;
        }
        std::vector<std::int64_t> rows(order.begin() + pos, order.begin() + pos + cfg.batch_size);
        pos += cfg.batch_size;
        return rows;
    };

    for (std::int64_t step = 1; step <= cfg.steps; ++step) {
        const std::vector<std::int64_t> rows = next_batch_rows();
        Tensor x = train_src.batch(rows);

        if (calibrate && step <= cfg.range_calibration_steps) {
            calibrator.observe(x);
            live_ssim.dynamic_range = calibrator.dynamic_range();
            state.dynamic_range = live_ssim.dynamic_range;
        }

        net.zero_grads();
        Tensor y = net.forward(x, true);
        Tensor dy;
        const double loss = compute_loss(x, y, &dy);
        if (!std::isfinite(loss)) throw Error("train: non-finite loss at step " +
                                              std::to_string(step));
        net.backward(dy);
        adam.step();
        state.step = step;

        CurvePoint pt;
        pt.step = step;
        pt.train_loss = loss;
        if (step % cfg.val_interval == 0 || step == cfg.steps) {
            pt.val_loss = validate_loss();
            pt.has_val = true;
            if (state.best_snapshot.empty() || pt.val_loss < state.best_val_loss) {
                state.best_val_loss = pt.val_loss;
                state.best_step = step;
                state.best_snapshot = net.snapshot();
            }
        }
        state.curve.push_back(pt);

        if (log) {
            nlohmann::json line;
            line["step"] = step;
            line["train_loss"] = loss;
            if (pt.has_val) line["val_loss"] = pt.val_loss;
            if (calibrate && step <= cfg.range_calibration_steps)
                line["dynamic_range"] = state.dynamic_range;
            log << line.dump() << "\n";
        }
    }
    net.release_caches();
    return state;
}

std::vector<CurvePoint> training_curve(const TrainState& state) { return state.curve; }

std::string curve_to_json(const std::vector<CurvePoint>& curve) {
    nlohmann::json arr = nlohmann::json::array();
    for (const CurvePoint& p : curve) {
        nlohmann::json j;
        j["step"] = p.step;
        j["train_loss"] = p.train_loss;
        if (p.has_val) j["val_loss"] = p.val_loss;
        arr.push_back(std::move(j));
    }
    return arr.dump();
}

std::vector<CurvePoint> curve_from_json(const std::string& text) {
    const nlohmann::json arr = nlohmann::json::parse(text);
    std::vector<CurvePoint> out;
    for (const auto& j : arr) {
        CurvePoint p;
        p.step = j.at("step").get<std::int64_t>();
        p.train_loss = j.at("train_loss").get<double>();
        if (j.contains("val_loss")) {
            p.val_loss = j.at("val_loss").get<double>();
            p.has_val = true;
        }
        out.push_back(p);
    }
    return out;
}

}  // namespace fae::train
