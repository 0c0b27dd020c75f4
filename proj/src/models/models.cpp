#include "fae/models/models.hpp"

#include <nlohmann/json.hpp>

#include "fae/io/archive.hpp"
#include "fae/rng.hpp"

namespace fae::models {

void FeatureAeSpec::validate() const {
    if (in_channels <= 0) throw SpecError("feature ae: in_channels must be positive");
    for (std::int64_t c : encoder_channels)
        if (c <= 0) throw SpecError("feature ae: encoder channels must be positive");
    if (kernel <= 0 || stride <= 0 || bottleneck_kernel <= 0 || bottleneck_channels <= 0)
        throw SpecError("feature ae: hyperparameters must be positive");
    if (kernel % 2 == 0 || bottleneck_kernel % 2 == 0)
        throw SpecError("feature ae: kernels must be odd for same padding");
    if (negative_slope <= 0.0f || dropout_p < 0.0f || dropout_p >= 1.0f)
        throw SpecError("feature ae: bad activation/dropout parameters");
}

std::string FeatureAeSpec::to_json() const {
    nlohmann::json j;
    j["in_channels"] = in_channels;
    j["encoder_channels"] = encoder_channels;
    j["kernel"] = kernel;
    j["stride"] = stride;
    j["negative_slope"] = negative_slope;
    j["dropout_p"] = dropout_p;
    j["bottleneck_kernel"] = bottleneck_kernel;
    j["bottleneck_channels"] = bottleneck_channels;
    return j.dump();
}

FeatureAeSpec FeatureAeSpec::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    FeatureAeSpec s;
    s.in_channels = j.at("in_channels").get<std::int64_t>();
    const auto enc = j.at("encoder_channels").get<std::vector<std::int64_t>>();
    if (enc.size() != 4) throw FormatError("feature ae spec: encoder_channels must have 4 entries");
    std::copy(enc.begin(), enc.end(), s.encoder_channels.begin());
    s.kernel = j.at("kernel").get<int>();
    s.stride = j.at("stride").get<int>();
    s.negative_slope = j.at("negative_slope").get<float>();
    s.dropout_p = j.at("dropout_p").get<float>();
    s.bottleneck_kernel = j.at("bottleneck_kernel").get<int>();
    s.bottleneck_channels = j.at("bottleneck_channels").get<std::int64_t>();
    s.validate();
    return s;
}

std::string model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::feature_ae: return "feature_ae";
        case ModelKind::image_ae_mse: return "image_ae_mse";
        case ModelKind::image_ae_ssim: return "image_ae_ssim";
        case ModelKind::dfr_style: return "dfr_style";
        case ModelKind::dfr_style_ssim: return "dfr_style_ssim";
    }
    throw ContractError("unreachable model kind");
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "feature_ae") return ModelKind::feature_ae;
    if (name == "image_ae_mse") return ModelKind::image_ae_mse;
    if (name == "image_ae_ssim") return ModelKind::image_ae_ssim;
    if (name == "dfr_style") return ModelKind::dfr_style;
    if (name == "dfr_style_ssim") return ModelKind::dfr_style_ssim;
    throw SpecError("unknown model kind: " + name);
}

bool is_feature_space(ModelKind k) {
    return k == ModelKind::feature_ae || k == ModelKind::dfr_style ||
           k == ModelKind::dfr_style_ssim;
}

bool uses_mssim_loss(ModelKind k) {
    return k == ModelKind::feature_ae || k == ModelKind::image_ae_ssim ||
           k == ModelKind::dfr_style_ssim;
}

Tensor Model::reconstruct(const Tensor& x) {
    if (x.rank() != 4 || x.shape()[1] != input_chw[0] || x.shape()[2] != input_chw[1] ||
        x.shape()[3] != input_chw[2])
        throw ContractError("reconstruct: input geometry does not match the model");
    return net.forward(x, false);
}

Model build_feature_ae(const FeatureAeSpec& spec, std::array<std::int64_t, 3> input_chw,
                       std::uint64_t seed) {
    spec.validate();
    if (input_chw[0] != spec.in_channels)
        throw SpecError("feature ae: input channels disagree with the spec");
    if (input_chw[1] % 16 != 0 || input_chw[2] % 16 != 0)
        throw SpecError("feature ae: spatial size must be divisible by 16");

    Model m;
    m.kind = ModelKind::feature_ae;
    m.spec = spec;
    m.seed = seed;
    m.input_chw = input_chw;
    Rng init(derive_seed(seed, "model-init", 0));
    const int pad = spec.kernel / 2;

    std::int64_t c_in = spec.in_channels;
    int drop_idx = 0;
    for (int stage = 0; stage < 4; ++stage) {
        const std::int64_t c_out = spec.encoder_channels[static_cast<std::size_t>(stage)];
        const std::string base = "enc" + std::to_string(stage);
        m.net.add(std::make_unique<nn::Conv2d>(base + ".conv", c_in, c_out, spec.kernel,
                                               spec.stride, pad, /*bias=*/false, init));
        m.net.add(std::make_unique<nn::BatchNorm2d>(base + ".bn", c_out));
        m.net.add(std::make_unique<nn::LeakyRelu>(base + ".act", spec.negative_slope));
        m.net.add(std::make_unique<nn::Dropout>(base + ".drop", spec.dropout_p,
                                                derive_seed(seed, "dropout", drop_idx++)));
        c_in = c_out;
    }
    m.net.add(std::make_unique<nn::Conv2d>("bottleneck.conv", c_in, spec.bottleneck_channels,
                                           spec.bottleneck_kernel, 1, spec.bottleneck_kernel / 2,
                                           /*bias=*/false, init));
    c_in = spec.bottleneck_channels;

    // Mirror of the encoder channel ladder, ending at the first stage's width.
    const std::array<std::int64_t, 4> dec_out{spec.encoder_channels[2], spec.encoder_channels[1],
                                              spec.encoder_channels[0], spec.encoder_channels[0]};
    for (int stage = 0; stage < 4; ++stage) {
        const std::int64_t c_out = dec_out[static_cast<std::size_t>(stage)];
        const std::string base = "dec" + std::to_string(stage);
        m.net.add(std::make_unique<nn::ConvTranspose2d>(base + ".convt", c_in, c_out, spec.kernel,
                                                        spec.stride, pad, /*output_pad=*/1, init));
        m.net.add(std::make_unique<nn::BatchNorm2d>(base + ".bn", c_out));
        m.net.add(std::make_unique<nn::LeakyRelu>(base + ".act", spec.negative_slope));
        m.net.add(std::make_unique<nn::Dropout>(base + ".drop", spec.dropout_p,
                                                derive_seed(seed, "dropout", drop_idx++)));
        c_in = c_out;
    }
    m.net.add(std::make_unique<nn::Conv2d>("out.conv", c_in, spec.in_channels, 1, 1, 0,
                                           /*bias=*/true, init));
    return m;
}

namespace {

Model build_dfr_style(ModelKind kind, std::array<std::int64_t, 3> input_chw, std::uint64_t seed) {
    const std::int64_t c = input_chw[0];
    if (c < 2) throw SpecError("dfr-style model: needs at least 2 input channels");
    Model m;
    m.kind = kind;
    m.seed = seed;
    m.input_chw = input_chw;
    m.spec.in_channels = c;
    Rng init(derive_seed(seed, "model-init", 0));

    const std::int64_t latent = c / 2;
    const std::array<std::int64_t, 5> hidden{128, 64, latent, 64, 128};
    std::int64_t c_in = c;
    for (int i = 0; i < 5; ++i) {
        const std::int64_t c_out = hidden[static_cast<std::size_t>(i)];
        const std::string base = "pw" + std::to_string(i);
        m.net.add(std::make_unique<nn::Conv2d>(base + ".conv", c_in, c_out, 1, 1, 0,
                                               /*bias=*/false, init));
        m.net.add(std::make_unique<nn::BatchNorm2d>(base + ".bn", c_out));
        m.net.add(std::make_unique<nn::LeakyRelu>(base + ".act", 0.01f));
        c_in = c_out;
    }
    m.net.add(std::make_unique<nn::Conv2d>("out.conv", c_in, c, 1, 1, 0, /*bias=*/true, init));
    return m;
}

}  // namespace

Model build_model(ModelKind kind, std::array<std::int64_t, 3> input_chw, std::uint64_t seed) {
    switch (kind) {
        case ModelKind::feature_ae: {
            FeatureAeSpec spec;
            spec.in_channels = input_chw[0];
            return build_feature_ae(spec, input_chw, seed);
        }
        case ModelKind::image_ae_mse:
        case ModelKind::image_ae_ssim: {
            FeatureAeSpec spec;
            spec.in_channels = input_chw[0];
            Model m = build_feature_ae(spec, input_chw, seed);
            m.kind = kind;
            return m;
        }
        case ModelKind::dfr_style:
        case ModelKind::dfr_style_ssim:
            return build_dfr_style(kind, input_chw, seed);
    }
    throw SpecError("unknown model kind");
}

void save_checkpoint(Model& model, double dynamic_range, const std::string& path,
                     const std::string& config_hash) {
    io::TensorArchive ar;
    nlohmann::json meta;
    meta["format_version"] = 1;
    meta["kind"] = model_kind_name(model.kind);
    meta["seed"] = model.seed;
    meta["input_chw"] = model.input_chw;
    meta["dynamic_range"] = dynamic_range;
    meta["config_hash"] = config_hash;
    meta["spec"] = nlohmann::json::parse(model.spec.to_json());
    ar.put_bytes("meta", meta.dump());
    model.net.save_state(ar, "net.");
    ar.save(path);
}

Model load_checkpoint(const std::string& path, double* dynamic_range) {
    io::TensorArchive ar = io::TensorArchive::load(path);
    if (!ar.has("meta")) throw FormatError("checkpoint: missing meta entry");
    const nlohmann::json meta = nlohmann::json::parse(ar.get_bytes("meta"));
    if (meta.at("format_version").get<int>() != 1)
        throw FormatError("checkpoint: unsupported format version");
    const ModelKind kind = model_kind_from_name(meta.at("kind").get<std::string>());
    const auto chw = meta.at("input_chw").get<std::array<std::int64_t, 3>>();
    const std::uint64_t seed = meta.at("seed").get<std::uint64_t>();
    Model m;
    if (kind == ModelKind::dfr_style || kind == ModelKind::dfr_style_ssim) {
        m = build_model(kind, chw, seed);
    } else {
        const FeatureAeSpec spec = FeatureAeSpec::from_json(meta.at("spec").dump());
        m = build_feature_ae(spec, chw, seed);
        m.kind = kind;
    }
    m.net.load_state(ar, "net.");
    if (dynamic_range) *dynamic_range = meta.at("dynamic_range").get<double>();
    return m;
}

}  // namespace fae::models
