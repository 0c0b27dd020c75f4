#include "fae/nn/layers.hpp"

#include <cmath>
#include <utility>

namespace fae::nn {

namespace {

Param make_param(std::string name, Tensor value) {
    Param p;
    p.name = std::move(name);
    p.grad = Tensor::full(value.shape(), 0.0f);
    p.value = std::move(value);
    return p;
}

}  // namespace

void init_conv_weight(Tensor& t, std::int64_t fan_in, Rng& rng) {
    if (fan_in <= 0) throw ContractError("weight init: fan_in must be positive");
    const double gain = std::sqrt(2.0 / (1.0 + 0.01 * 0.01));
    const double stddev = gain / std::sqrt(static_cast<double>(fan_in));
    float* p = t.data();
    for (std::int64_t i = 0; i < t.numel(); ++i)
        p[i] = static_cast<float>(stddev * rng.normal());
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::string name, std::int64_t in_c, std::int64_t out_c, int kernel, int stride,
               int pad, bool bias, Rng& init_rng)
    : Layer(std::move(name)), has_bias_(bias), stride_(stride), pad_(pad) {
    Tensor w({out_c, in_c, kernel, kernel});
    init_conv_weight(w, in_c * kernel * kernel, init_rng);
    weight_ = make_param(name_ + ".weight", std::move(w));
    if (has_bias_) bias_ = make_param(name_ + ".bias", Tensor::full({out_c}, 0.0f));
}

Tensor Conv2d::forward(const Tensor& x, bool training) {
    (void)training;
    // Patch matrices are rebuilt per sample in backward; caching them for a
    // whole batch costs far more memory traffic than the rebuild.
    return conv2d_forward(x, weight_.value, has_bias_ ? bias_.value.data() : nullptr, stride_,
                          pad_, nullptr);
}

Tensor Conv2d::backward(const Tensor& dy, const Tensor& x, bool need_dx) {
    if (x.numel() == 0) throw ContractError(name_ + ": backward without a training forward");
    Conv2dGrads g = conv2d_backward(x, weight_.value, dy, stride_, pad_, has_bias_, nullptr,
                                    need_dx);
    float* wg = weight_.grad.data();
    const float* dw = g.dweight.data();
    for (std::int64_t i = 0; i < weight_.grad.numel(); ++i) wg[i] += dw[i];
    if (has_bias_) {
        float* bg = bias_.grad.data();
        const float* db = g.dbias.data();
        for (std::int64_t i = 0; i < bias_.grad.numel(); ++i) bg[i] += db[i];
    }
    return std::move(g.dx);
}

std::vector<Param*> Conv2d::params() {
    std::vector<Param*> out{&weight_};
    if (has_bias_) out.push_back(&bias_);
    return out;
}

// ---------------------------------------------------------------------------
// ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(std::string name, std::int64_t in_c, std::int64_t out_c,
                                 int kernel, int stride, int pad, int output_pad, Rng& init_rng)
    : Layer(std::move(name)), stride_(stride), pad_(pad), output_pad_(output_pad) {
    Tensor w({in_c, out_c, kernel, kernel});
    init_conv_weight(w, in_c * kernel * kernel, init_rng);
    weight_ = make_param(name_ + ".weight", std::move(w));
}

Tensor ConvTranspose2d::forward(const Tensor& x, bool training) {
    (void)training;
    return conv_transpose2d_forward(x, weight_.value, stride_, pad_, output_pad_);
}

Tensor ConvTranspose2d::backward(const Tensor& dy, const Tensor& x, bool need_dx) {
    if (x.numel() == 0) throw ContractError(name_ + ": backward without a training forward");
    ConvT2dGrads g =
        conv_transpose2d_backward(x, weight_.value, dy, stride_, pad_, output_pad_, need_dx);
    float* wg = weight_.grad.data();
    const float* dw = g.dweight.data();
    for (std::int64_t i = 0; i < weight_.grad.numel(); ++i) wg[i] += dw[i];
    return std::move(g.dx);
}

std::vector<Param*> ConvTranspose2d::params() { return {&weight_}; }

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, std::int64_t channels, double momentum, double eps)
    : Layer(std::move(name)), momentum_(momentum), eps_(eps) {
    gamma_ = make_param(name_ + ".gamma", Tensor::full({channels}, 1.0f));
    beta_ = make_param(name_ + ".beta", Tensor::full({channels}, 0.0f));
    running_mean_ = make_param(name_ + ".running_mean", Tensor::full({channels}, 0.0f));
    running_var_ = make_param(name_ + ".running_var", Tensor::full({channels}, 1.0f));
}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) {
    if (training)
        return batchnorm_forward_train(x, gamma_.value, beta_.value, running_mean_.value,
                                       running_var_.value, momentum_, eps_, cache_);
    return batchnorm_forward_eval(x, gamma_.value, beta_.value, running_mean_.value,
                                  running_var_.value, eps_);
}

Tensor BatchNorm2d::backward(const Tensor& dy, const Tensor& x, bool need_dx) {
    (void)x;        // normalized activations are cached instead
    (void)need_dx;  // dgamma/dbeta come from the same pass, dx is cheap
    if (cache_.xhat.numel() == 0)
        throw ContractError(name_ + ": backward without a training forward");
    BatchNormGrads g = batchnorm_backward(dy, gamma_.value, cache_);
    float* gg = gamma_.grad.data();
    float* bg = beta_.grad.data();
    const float* dg = g.dgamma.data();
    const float* db = g.dbeta.data();
    for (std::int64_t i = 0; i < gamma_.grad.numel(); ++i) {
        gg[i] += dg[i];
        bg[i] += db[i];
    }
    return std::move(g.dx);
}

std::vector<Param*> BatchNorm2d::params() { return {&gamma_, &beta_}; }
std::vector<Param*> BatchNorm2d::state() { return {&running_mean_, &running_var_}; }

void BatchNorm2d::release_caches() { cache_ = BatchNormCache{}; }

// ---------------------------------------------------------------------------
// LeakyRelu

LeakyRelu::LeakyRelu(std::string name, float negative_slope)
    : Layer(std::move(name)), slope_(negative_slope) {
    if (negative_slope <= 0.0f || negative_slope >= 1.0f)
        throw ContractError("leaky relu: slope must lie in (0, 1)");
}

Tensor LeakyRelu::forward(const Tensor& x, bool training) {
    (void)training;
    return leaky_relu_forward(x, slope_);
}

Tensor LeakyRelu::backward(const Tensor& dy, const Tensor& x, bool need_dx) {
    (void)need_dx;
    if (x.numel() == 0) throw ContractError(name_ + ": backward without a training forward");
    // The input and the output have the same sign pattern, so the input
    // serves as the gradient gate.
    return leaky_relu_backward(dy, x, slope_);
}

// ---------------------------------------------------------------------------
// Dropout

Dropout::Dropout(std::string name, float p, std::uint64_t seed)
    : Layer(std::move(name)), p_(p), rng_(seed) {
    if (p < 0.0f || p >= 1.0f) throw ContractError("dropout: p must lie in [0, 1)");
}

Tensor Dropout::forward(const Tensor& x, bool training) {
    if (!training || p_ == 0.0f) {
        identity_ = true;
        mask_ = Tensor();
        return x;
    }
    identity_ = false;
    return dropout_forward_train(x, p_, rng_, mask_);
}

Tensor Dropout::backward(const Tensor& dy, const Tensor& x, bool need_dx) {
    (void)x;  // the recorded mask carries everything backward needs
    (void)need_dx;
    if (identity_) return dy;
    if (mask_.numel() == 0) throw ContractError(name_ + ": backward without a training forward");
    return dropout_backward(dy, mask_);
}

void Dropout::release_caches() { mask_ = Tensor(); }

// ---------------------------------------------------------------------------
// Network

Layer& Network::add(std::unique_ptr<Layer> layer) {
    layers_.push_back(std::move(layer));
    return *layers_.back();
}

Tensor Network::forward(const Tensor& x, bool training) {
    if (layers_.empty()) throw ContractError("network: no layers");
    if (!training) {
        input0_ = nullptr;
        acts_.clear();
        Tensor cur = layers_[0]->forward(x, false);
        for (std::size_t i = 1; i < layers_.size(); ++i) cur = layers_[i]->forward(cur, false);
        return cur;
    }
    input0_ = &x;
    acts_.resize(layers_.size());  // acts_[0] stays empty; layer 0 reads *input0_
    const Tensor* cur = &x;
    Tensor out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        out = layers_[i]->forward(*cur, true);
        if (i + 1 < layers_.size()) {
            acts_[i + 1] = std::move(out);
            cur = &acts_[i + 1];
        }
    }
    return out;
}

Tensor Network::backward(const Tensor& dy) {
    if (input0_ == nullptr) throw ContractError("network: backward without a training forward");
    Tensor cur = dy;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        const bool need_dx = i > 0 || input_grad_needed;
        const Tensor& x = i == 0 ? *input0_ : acts_[i];
        cur = layers_[i]->backward(cur, x, need_dx);
    }
    input0_ = nullptr;
    return cur;
}

std::vector<Param*> Network::params() {
    std::vector<Param*> out;
    for (auto& l : layers_)
        for (Param* p : l->params()) out.push_back(p);
    return out;
}

std::vector<Param*> Network::state() {
    std::vector<Param*> out;
    for (auto& l : layers_)
        for (Param* p : l->state()) out.push_back(p);
    return out;
}

void Network::zero_grads() {
    for (Param* p : params()) {
        float* g = p->grad.data();
        for (std::int64_t i = 0; i < p->grad.numel(); ++i) g[i] = 0.0f;
    }
}

std::int64_t Network::parameter_count() {
    std::int64_t n = 0;
    for (Param* p : params()) n += p->value.numel();
    return n;
}

void Network::release_caches() {
    for (auto& l : layers_) l->release_caches();
    acts_.clear();
    input0_ = nullptr;
}

std::vector<Tensor> Network::snapshot() {
    std::vector<Tensor> out;
    for (Param* p : params()) out.push_back(p->value);
    for (Param* p : state()) out.push_back(p->value);
    return out;
}

void Network::restore(const std::vector<Tensor>& snap) {
    std::vector<Param*> all = params();
    for (Param* p : state()) all.push_back(p);
    if (snap.size() != all.size()) throw ContractError("network restore: snapshot size mismatch");
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (snap[i].shape() != all[i]->value.shape())
            throw ContractError("network restore: shape mismatch for " + all[i]->name);
        all[i]->value = snap[i];
    }
}

void Network::save_state(io::TensorArchive& ar, const std::string& prefix) {
    for (Param* p : params()) ar.put(prefix + p->name, p->value);
    for (Param* p : state()) ar.put(prefix + p->name, p->value);
}

void Network::load_state(const io::TensorArchive& ar, const std::string& prefix) {
    std::vector<Param*> all = params();
    for (Param* p : state()) all.push_back(p);
    for (Param* p : all) {
        Tensor t = ar.get(prefix + p->name);
        if (t.shape() != p->value.shape())
            throw FormatError("checkpoint: shape mismatch for " + p->name);
        p->value = std::move(t);
    }
}

}  // namespace fae::nn
