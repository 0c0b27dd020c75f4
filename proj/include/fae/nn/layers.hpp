#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fae/io/archive.hpp"
#include "fae/nn/ops.hpp"
#include "fae/rng.hpp"
#include "fae/tensor.hpp"

namespace fae::nn {

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
};

// Layers do not retain their forward input; the caller owns the activations
// and hands the same tensor back to backward. This keeps big feature batches
// from being copied once per layer per step. Layers still own state that only
// they can reconstruct (batch-norm statistics, dropout masks).
class Layer {
  public:
    explicit Layer(std::string name) : name_(std::move(name)) {}
    virtual ~Layer() = default;

    virtual Tensor forward(const Tensor& x, bool training) = 0;
    // dy = dL/d(output); x must be the tensor passed to the matching
    // training-mode forward. Returns dL/dx (empty when need_dx is false).
    virtual Tensor backward(const Tensor& dy, const Tensor& x, bool need_dx) = 0;
    virtual std::vector<Param*> params() { return {}; }  // trainable
    virtual std::vector<Param*> state() { return {}; }   // running statistics
    virtual void release_caches() {}

    const std::string& name() const { return name_; }

  protected:
    std::string name_;
};

class Conv2d : public Layer {
  public:
    Conv2d(std::string name, std::int64_t in_c, std::int64_t out_c, int kernel, int stride,
           int pad, bool bias, Rng& init_rng);

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& dy, const Tensor& x, bool need_dx) override;
    std::vector<Param*> params() override;

    bool has_bias() const { return has_bias_; }

  private:
    Param weight_, bias_;
    bool has_bias_;
    std::int64_t stride_, pad_;
};

class ConvTranspose2d : public Layer {
  public:
    ConvTranspose2d(std::string name, std::int64_t in_c, std::int64_t out_c, int kernel,
                    int stride, int pad, int output_pad, Rng& init_rng);

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& dy, const Tensor& x, bool need_dx) override;
    std::vector<Param*> params() override;

  private:
    Param weight_;
    std::int64_t stride_, pad_, output_pad_;
};

class BatchNorm2d : public Layer {
  public:
    BatchNorm2d(std::string name, std::int64_t channels, double momentum = 0.1,
                double eps = 1e-5);

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& dy, const Tensor& x, bool need_dx) override;
    std::vector<Param*> params() override;
    std::vector<Param*> state() override;
    void release_caches() override;

  private:
    Param gamma_, beta_;
    Param running_mean_, running_var_;
    double momentum_, eps_;
    BatchNormCache cache_;
};

class LeakyRelu : public Layer {
  public:
    LeakyRelu(std::string name, float negative_slope);

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& dy, const Tensor& x, bool need_dx) override;

  private:
    float slope_;
};

// Inverted dropout with a layer-owned random stream, so a training run's mask
// sequence depends only on the construction seed and the order of training
// forwards. Eval-mode forwards do not advance the stream.
class Dropout : public Layer {
  public:
    Dropout(std::string name, float p, std::uint64_t seed);

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& dy, const Tensor& x, bool need_dx) override;
    void release_caches() override;

  private:
    float p_;
    Rng rng_;
    Tensor mask_;
    bool identity_ = false;  // last forward ran in eval mode
};

// A straight-line stack of layers with named parameters.
class Network {
  public:
    Network() = default;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    Layer& add(std::unique_ptr<Layer> layer);
    std::size_t size() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }

    // A training-mode forward keeps a pointer to x alongside the intermediate
    // activations; the caller must keep x alive until backward returns.
    Tensor forward(const Tensor& x, bool training);
    // dL/d(output) in, dL/d(input) out (empty unless input_grad_needed).
    Tensor backward(const Tensor& dy);

    std::vector<Param*> params();
    std::vector<Param*> state();
    void zero_grads();
    std::int64_t parameter_count();  // trainable values only
    void release_caches();

    // Copy of every param and state value, for best-snapshot bookkeeping.
    std::vector<Tensor> snapshot();
    void restore(const std::vector<Tensor>& snap);

    void save_state(io::TensorArchive& ar, const std::string& prefix);
    void load_state(const io::TensorArchive& ar, const std::string& prefix);

    bool input_grad_needed = false;

  private:
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<Tensor> acts_;            // acts_[i] = input to layer i, i >= 1
    const Tensor* input0_ = nullptr;      // input to layer 0, caller-owned
};

// He-style normal init scaled for leaky-relu fan-in; fills t in place.
void init_conv_weight(Tensor& t, std::int64_t fan_in, Rng& rng);

}  // namespace fae::nn
