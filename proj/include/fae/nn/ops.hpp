#pragma once

#include <cstdint>
#include <optional>

#include "fae/tensor.hpp"

namespace fae::nn {

// C[m x n] = op_a(A) * op_b(B), optionally accumulating into C.
// All matrices are dense row-major.
void gemm(const float* a, const float* b, float* c, std::int64_t m, std::int64_t k,
          std::int64_t n, bool trans_a = false, bool trans_b = false, bool accumulate = false);

struct ConvGeom {
    std::int64_t in_c = 0, in_h = 0, in_w = 0;
    std::int64_t out_c = 0, out_h = 0, out_w = 0;
    std::int64_t kernel = 1, stride = 1, pad = 0;
};

// out = floor((in + 2*pad - kernel) / stride) + 1
std::int64_t conv_out_size(std::int64_t in, std::int64_t kernel, std::int64_t stride,
                           std::int64_t pad);

ConvGeom make_conv_geom(std::int64_t in_c, std::int64_t in_h, std::int64_t in_w,
                        std::int64_t out_c, std::int64_t kernel, std::int64_t stride,
                        std::int64_t pad);

// Column buffer layout: [in_c * k * k, out_h * out_w], one sample at a time.
void im2col(const float* x, const ConvGeom& g, float* cols);
void col2im_accumulate(const float* cols, const ConvGeom& g, float* x);

// weight: [out_c, in_c, k, k]; x: [N, in_c, H, W]; returns [N, out_c, Ho, Wo].
// When cols_cache is given it receives the per-sample column buffers
// (size N * colsK * colsP) for reuse in conv2d_backward.
Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const float* bias,
                      std::int64_t stride, std::int64_t pad, Tensor* cols_cache = nullptr);

struct Conv2dGrads {
    Tensor dx;
    Tensor dweight;
    Tensor dbias;  // empty when the conv has no bias
};

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                            std::int64_t stride, std::int64_t pad, bool has_bias,
                            const Tensor* cols_cache = nullptr, bool need_dx = true);

// Transpose convolution; weight: [in_c, out_c, k, k] so that the op is the
// exact adjoint of a conv2d with the same weight, stride and pad.
// out = (in - 1) * stride - 2*pad + kernel + output_pad.
Tensor conv_transpose2d_forward(const Tensor& x, const Tensor& weight, std::int64_t stride,
                                std::int64_t pad, std::int64_t output_pad);

struct ConvT2dGrads {
    Tensor dx;
    Tensor dweight;
};

ConvT2dGrads conv_transpose2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                                       std::int64_t stride, std::int64_t pad,
                                       std::int64_t output_pad, bool need_dx = true);

// Batch normalization over N*H*W per channel.
struct BatchNormCache {
    Tensor xhat;
    std::vector<double> inv_std;  // per channel
};

Tensor batchnorm_forward_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                               Tensor& running_mean, Tensor& running_var, double momentum,
                               double eps, BatchNormCache& cache);

Tensor batchnorm_forward_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                              const Tensor& running_mean, const Tensor& running_var, double eps);

struct BatchNormGrads {
    Tensor dx, dgamma, dbeta;
};

BatchNormGrads batchnorm_backward(const Tensor& dy, const Tensor& gamma,
                                  const BatchNormCache& cache);

Tensor leaky_relu_forward(const Tensor& x, float negative_slope);
Tensor leaky_relu_backward(const Tensor& dy, const Tensor& y, float negative_slope);

// Inverted dropout; mask entries are 0 or 1/(1-p).
Tensor dropout_forward_train(const Tensor& x, float p, Rng& rng, Tensor& mask);
Tensor dropout_backward(const Tensor& dy, const Tensor& mask);

void relu_inplace(Tensor& x);

// 3x3 stride-2 pad-1 max pooling (backbone stem), forward only.
Tensor maxpool_3x3_s2(const Tensor& x);

}  // namespace fae::nn
