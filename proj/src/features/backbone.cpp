#include "fae/features/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fae/common.hpp"
#include "fae/io/archive.hpp"
#include "fae/nn/layers.hpp"
#include "fae/nn/ops.hpp"
#include "fae/rng.hpp"

namespace fae::features {

namespace {

constexpr std::array<float, 3> kInputMean{0.485f, 0.456f, 0.406f};
constexpr std::array<float, 3> kInputStd{0.229f, 0.224f, 0.225f};
constexpr double kBnEps = 1e-5;

// Output size of one stride-2 stage (7x7 pad-3 conv, 3x3 pad-1 pool and
// 3x3 pad-1 conv all reduce to the same arithmetic).
std::int64_t half(std::int64_t n) { return (n - 1) / 2 + 1; }

std::int64_t tap_size(int layer_id, std::int64_t input_size) {
    std::int64_t s = half(half(input_size));  // stem conv + max pool
    for (int i = 1; i <= layer_id; ++i)
        if (i >= 2) s = half(s);  // stage 1 keeps the stem resolution
    return s;
}

}  // namespace

void LayerSelection::validate() const {
    if (layer_ids.empty()) throw ContractError("layer selection: must not be empty");
    for (std::size_t i = 0; i < layer_ids.size(); ++i) {
        if (layer_ids[i] < 0 || layer_ids[i] > 3)
            throw ContractError("layer selection: ids must lie in {0,1,2,3}");
        if (i > 0 && layer_ids[i] <= layer_ids[i - 1])
            throw ContractError("layer selection: ids must be strictly ascending");
    }
}

std::string LayerSelection::to_string() const {
    std::string out;
    for (std::size_t i = 0; i < layer_ids.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(layer_ids[i]);
    }
    return out;
}

LayerSelection LayerSelection::parse(const std::string& s) {
    LayerSelection sel;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) throw ConfigError("layer selection: empty id in '" + s + "'");
        std::size_t pos = 0;
        int v = std::stoi(tok, &pos);
        if (pos != tok.size()) throw ConfigError("layer selection: bad id '" + tok + "'");
        sel.layer_ids.push_back(v);
    }
    sel.validate();
    return sel;
}

std::array<std::int64_t, 4> layer_channels() { return {64, 64, 128, 256}; }

FusedGeometry output_geometry(const LayerSelection& sel, std::int64_t input_size) {
    sel.validate();
    if (input_size < 32) throw ContractError("output geometry: input too small");
    const auto widths = layer_channels();
    FusedGeometry g;
    g.height = g.width = tap_size(sel.layer_ids.front(), input_size);
    for (int id : sel.layer_ids) g.channels += widths[static_cast<std::size_t>(id)];
    return g;
}

// ---------------------------------------------------------------------------
// Construction

namespace {

Tensor he_weight(std::vector<std::int64_t> shape, Rng& rng) {
    Tensor w(std::move(shape));
    const std::int64_t fan_in = w.shape()[1] * w.shape()[2] * w.shape()[3];
    nn::init_conv_weight(w, fan_in, rng);
    return w;
}

}  // namespace

Backbone Backbone::random_init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "backbone-init", 0));
    Backbone b;
    auto make_bn = [](std::int64_t c, ConvBn& cb) {
        cb.gamma = Tensor::full({c}, 1.0f);
        cb.beta = Tensor::full({c}, 0.0f);
        cb.mean = Tensor::full({c}, 0.0f);
        cb.var = Tensor::full({c}, 1.0f);
    };
    b.stem_.w = he_weight({64, 3, 7, 7}, rng);
    b.stem_.stride = 2;
    b.stem_.pad = 3;
    make_bn(64, b.stem_);

    const std::array<std::int64_t, 4> widths = {64, 64, 128, 256};
    for (int stage = 1; stage <= 3; ++stage) {
        const std::int64_t in_c = widths[static_cast<std::size_t>(stage - 1)];
        const std::int64_t out_c = widths[static_cast<std::size_t>(stage)];
        const bool down = stage >= 2;
        for (int blk = 0; blk < 2; ++blk) {
            Block& bl = b.stages_[static_cast<std::size_t>(stage - 1)][static_cast<std::size_t>(blk)];
            const std::int64_t bin = blk == 0 ? in_c : out_c;
            const std::int64_t s1 = (blk == 0 && down) ? 2 : 1;
            bl.conv1.w = he_weight({out_c, bin, 3, 3}, rng);
            bl.conv1.stride = s1;
            bl.conv1.pad = 1;
            make_bn(out_c, bl.conv1);
            bl.conv2.w = he_weight({out_c, out_c, 3, 3}, rng);
            bl.conv2.stride = 1;
            bl.conv2.pad = 1;
            make_bn(out_c, bl.conv2);
            if (blk == 0 && down) {
                ConvBn d;
                d.w = he_weight({out_c, bin, 1, 1}, rng);
                d.stride = 2;
                d.pad = 0;
                make_bn(out_c, d);
                bl.down = std::move(d);
            }
        }
    }
    return b;
}

Backbone Backbone::from_archive(const std::string& path) {
    io::TensorArchive ar;
    try {
        ar = io::TensorArchive::load(path);
    } catch (const Error& e) {
        throw InitError("backbone weights unavailable at '" + path + "': " + e.what());
    }
    Backbone b = Backbone::random_init(0);  // correct shapes, then overwrite everything
    auto fetch = [&](const std::string& name, Tensor& dst) {
        if (!ar.has(name)) throw InitError("backbone weights: missing entry " + name);
        Tensor t = ar.get(name);
        if (t.shape() != dst.shape()) throw InitError("backbone weights: bad shape for " + name);
        dst = std::move(t);
    };
    auto fetch_cb = [&](const std::string& prefix, ConvBn& cb) {
        fetch(prefix + ".conv.weight", cb.w);
        fetch(prefix + ".bn.gamma", cb.gamma);
        fetch(prefix + ".bn.beta", cb.beta);
        fetch(prefix + ".bn.running_mean", cb.mean);
        fetch(prefix + ".bn.running_var", cb.var);
    };
    fetch_cb("stem", b.stem_);
    for (int stage = 1; stage <= 3; ++stage) {
        for (int blk = 0; blk < 2; ++blk) {
            Block& bl = b.stages_[static_cast<std::size_t>(stage - 1)][static_cast<std::size_t>(blk)];
            const std::string p =
                "stage" + std::to_string(stage) + ".block" + std::to_string(blk);
            fetch_cb(p + ".conv1", bl.conv1);
            fetch_cb(p + ".conv2", bl.conv2);
            if (bl.down) fetch_cb(p + ".down", *bl.down);
        }
    }
    return b;
}

// ---------------------------------------------------------------------------
// Inference

Tensor Backbone::run_conv_bn(const ConvBn& cb, const Tensor& x) const {
    Tensor y = nn::conv2d_forward(x, cb.w, nullptr, cb.stride, cb.pad);
    return nn::batchnorm_forward_eval(y, cb.gamma, cb.beta, cb.mean, cb.var, kBnEps);
}

Tensor Backbone::run_block(const Block& b, const Tensor& x) const {
    Tensor y = run_conv_bn(b.conv1, x);
    nn::relu_inplace(y);
    y = run_conv_bn(b.conv2, y);
    Tensor idn = b.down ? run_conv_bn(*b.down, x) : x;
    if (y.shape() != idn.shape()) throw ContractError("backbone: residual shape mismatch");
    float* yp = y.data();
    const float* ip = idn.data();
    for (std::int64_t i = 0; i < y.numel(); ++i) yp[i] += ip[i];
    nn::relu_inplace(y);
    return y;
}

FeatureStack Backbone::extract(const Tensor& batch, const LayerSelection& sel) const {
    sel.validate();
    if (batch.rank() != 4 || batch.shape()[1] != 1)
        throw ContractError("extract: batch must be [B, 1, H, W] grayscale");
    if (!batch.all_finite()) throw ContractError("extract: non-finite input");
    const float lo = batch.min(), hi = batch.max();
    if (lo < 0.0f || hi > 1.0f) throw ContractError("extract: inputs must lie in [0, 1]");

    const std::int64_t n = batch.shape()[0];
    const std::int64_t h = batch.shape()[2];
    const std::int64_t w = batch.shape()[3];

    // Grayscale -> 3 channels with the published normalization statistics.
    Tensor rgb({n, 3, h, w});
    const std::int64_t hw = h * w;
    for (std::int64_t bi = 0; bi < n; ++bi) {
        const float* src = batch.data() + bi * hw;
        for (std::int64_t c = 0; c < 3; ++c) {
            float* dst = rgb.data() + (bi * 3 + c) * hw;
            const float m = kInputMean[static_cast<std::size_t>(c)];
            const float s = kInputStd[static_cast<std::size_t>(c)];
            for (std::int64_t i = 0; i < hw; ++i) dst[i] = (src[i] - m) / s;
        }
    }

    const int deepest = sel.layer_ids.back();
    std::array<Tensor, 4> taps;
    Tensor cur = nn::conv2d_forward(rgb, stem_.w, nullptr, stem_.stride, stem_.pad);
    cur = nn::batchnorm_forward_eval(cur, stem_.gamma, stem_.beta, stem_.mean, stem_.var, kBnEps);
    nn::relu_inplace(cur);
    cur = nn::maxpool_3x3_s2(cur);
    taps[0] = cur;
    for (int stage = 1; stage <= deepest; ++stage) {
        for (const Block& bl : stages_[static_cast<std::size_t>(stage - 1)])
            cur = run_block(bl, cur);
        taps[static_cast<std::size_t>(stage)] = cur;
    }

    const Tensor& largest = taps[static_cast<std::size_t>(sel.layer_ids.front())];
    const std::int64_t oh = largest.shape()[2];
    const std::int64_t ow = largest.shape()[3];
    std::int64_t total_c = 0;
    for (int id : sel.layer_ids) total_c += taps[static_cast<std::size_t>(id)].shape()[1];
    if (h == w) {
        const FusedGeometry geom = output_geometry(sel, h);
        if (geom.height != oh || geom.width != ow || geom.channels != total_c)
            throw ContractError("extract: geometry disagrees with output_geometry");
    }

    FeatureStack out;
    out.features = Tensor({n, total_c, oh, ow});
    out.layer_boundaries.push_back(0);
    std::int64_t offset = 0;
    for (int id : sel.layer_ids) {
        const Tensor& tap = taps[static_cast<std::size_t>(id)];
        Tensor resized =
            (tap.shape()[2] == oh && tap.shape()[3] == ow) ? tap : bilinear_resize_nchw(tap, oh, ow);
        const std::int64_t c = resized.shape()[1];
        const std::int64_t plane = oh * ow;
        for (std::int64_t bi = 0; bi < n; ++bi) {
            const float* src = resized.data() + bi * c * plane;
            float* dst = out.features.data() + (bi * total_c + offset) * plane;
            std::copy(src, src + c * plane, dst);
        }
        offset += c;
        out.layer_boundaries.push_back(offset);
    }
    return out;
}

std::uint64_t Backbone::weight_fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](const Tensor& t) {
        h = fnv1a(reinterpret_cast<const unsigned char*>(t.data()),
                  static_cast<std::size_t>(t.numel()) * sizeof(float), h);
    };
    auto mix_cb = [&](const ConvBn& cb) {
        mix(cb.w);
        mix(cb.gamma);
        mix(cb.beta);
        mix(cb.mean);
        mix(cb.var);
    };
    mix_cb(stem_);
    for (const auto& stage : stages_) {
        for (const Block& bl : stage) {
            mix_cb(bl.conv1);
            mix_cb(bl.conv2);
            if (bl.down) mix_cb(*bl.down);
        }
    }
    return h;
}

}  // namespace fae::features
