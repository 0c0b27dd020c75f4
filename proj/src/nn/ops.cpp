#include "fae/nn/ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <limits>

#include "fae/common.hpp"
#include "fae/parallel.hpp"

namespace fae::nn {

namespace {
using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;
}  // namespace

void gemm(const float* a, const float* b, float* c, std::int64_t m, std::int64_t k,
          std::int64_t n, bool trans_a, bool trans_b, bool accumulate) {
    MapM C(c, m, n);
    auto run = [&](const auto& A, const auto& B) {
        if (accumulate)
            C.noalias() += A * B;
        else
            C.noalias() = A * B;
    };
    if (!trans_a && !trans_b) {
        run(MapC(a, m, k), MapC(b, k, n));
    } else if (trans_a && !trans_b) {
        run(MapC(a, k, m).transpose(), MapC(b, k, n));
    } else if (!trans_a && trans_b) {
        run(MapC(a, m, k), MapC(b, n, k).transpose());
    } else {
        run(MapC(a, k, m).transpose(), MapC(b, n, k).transpose());
    }
}

std::int64_t conv_out_size(std::int64_t in, std::int64_t kernel, std::int64_t stride,
                           std::int64_t pad) {
    std::int64_t num = in + 2 * pad - kernel;
    if (num < 0) throw SpecError("conv kernel larger than padded input");
    return num / stride + 1;
}

ConvGeom make_conv_geom(std::int64_t in_c, std::int64_t in_h, std::int64_t in_w,
                        std::int64_t out_c, std::int64_t kernel, std::int64_t stride,
                        std::int64_t pad) {
    ConvGeom g;
    g.in_c = in_c;
    g.in_h = in_h;
    g.in_w = in_w;
    g.out_c = out_c;
    g.kernel = kernel;
    g.stride = stride;
    g.pad = pad;
    g.out_h = conv_out_size(in_h, kernel, stride, pad);
    g.out_w = conv_out_size(in_w, kernel, stride, pad);
    return g;
}

void im2col(const float* x, const ConvGeom& g, float* cols) {
    const std::int64_t k = g.kernel, p = g.pad, s = g.stride;
    const std::int64_t P = g.out_h * g.out_w;
    for (std::int64_t ci = 0; ci < g.in_c; ++ci) {
        const float* xc = x + ci * g.in_h * g.in_w;
        for (std::int64_t ky = 0; ky < k; ++ky) {
            for (std::int64_t kx = 0; kx < k; ++kx) {
                float* dst = cols + ((ci * k + ky) * k + kx) * P;
                for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
                    const std::int64_t iy = oy * s + ky - p;
                    float* row = dst + oy * g.out_w;
                    if (iy < 0 || iy >= g.in_h) {
                        std::memset(row, 0, sizeof(float) * static_cast<std::size_t>(g.out_w));
                        continue;
                    }
                    const float* src = xc + iy * g.in_w;
                    for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
                        const std::int64_t ix = ox * s + kx - p;
                        row[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_accumulate(const float* cols, const ConvGeom& g, float* x) {
    const std::int64_t k = g.kernel, p = g.pad, s = g.stride;
    const std::int64_t P = g.out_h * g.out_w;
    for (std::int64_t ci = 0; ci < g.in_c; ++ci) {
        float* xc = x + ci * g.in_h * g.in_w;
        for (std::int64_t ky = 0; ky < k; ++ky) {
            for (std::int64_t kx = 0; kx < k; ++kx) {
                const float* src = cols + ((ci * k + ky) * k + kx) * P;
                for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
                    const std::int64_t iy = oy * s + ky - p;
                    if (iy < 0 || iy >= g.in_h) continue;
                    float* row = xc + iy * g.in_w;
                    const float* srow = src + oy * g.out_w;
                    for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
                        const std::int64_t ix = ox * s + kx - p;
                        if (ix >= 0 && ix < g.in_w) row[ix] += srow[ox];
                    }
                }
            }
        }
    }
}

namespace {

bool is_pointwise(const ConvGeom& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

ConvGeom geom_from(const Tensor& x, const Tensor& weight, std::int64_t stride, std::int64_t pad) {
    if (x.rank() != 4 || weight.rank() != 4) throw ContractError("conv expects rank-4 tensors");
    if (x.dim(1) != weight.dim(1)) throw ContractError("conv channel mismatch");
    if (weight.dim(2) != weight.dim(3)) throw SpecError("only square kernels supported");
    return make_conv_geom(x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2), stride, pad);
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const float* bias,
                      std::int64_t stride, std::int64_t pad, Tensor* cols_cache) {
    const ConvGeom g = geom_from(x, weight, stride, pad);
    const std::int64_t N = x.dim(0);
    const std::int64_t K = g.in_c * g.kernel * g.kernel;
    const std::int64_t P = g.out_h * g.out_w;
    Tensor y({N, g.out_c, g.out_h, g.out_w});

    const bool pointwise = is_pointwise(g);
    if (cols_cache && !pointwise) *cols_cache = Tensor({N, K, P});

    Tensor scratch;
    if (!pointwise && !cols_cache) scratch = Tensor({K, P});

    parallel_for(0, N, [&](std::int64_t n) {
        const float* xn = x.data() + n * g.in_c * g.in_h * g.in_w;
        const float* cols = xn;
        if (!pointwise) {
            float* buf = cols_cache ? cols_cache->data() + n * K * P : scratch.data();
            im2col(xn, g, buf);
            cols = buf;
        }
        float* yn = y.data() + n * g.out_c * P;
        gemm(weight.data(), cols, yn, g.out_c, K, P);
        if (bias) {
            for (std::int64_t co = 0; co < g.out_c; ++co) {
                float b = bias[co];
                float* row = yn + co * P;
                for (std::int64_t i = 0; i < P; ++i) row[i] += b;
            }
        }
    });
    return y;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                            std::int64_t stride, std::int64_t pad, bool has_bias,
                            const Tensor* cols_cache, bool need_dx) {
    const ConvGeom g = geom_from(x, weight, stride, pad);
    const std::int64_t N = x.dim(0);
    const std::int64_t K = g.in_c * g.kernel * g.kernel;
    const std::int64_t P = g.out_h * g.out_w;
    if (dy.dim(0) != N || dy.dim(1) != g.out_c || dy.dim(2) != g.out_h || dy.dim(3) != g.out_w)
        throw ContractError("conv2d_backward: dy shape mismatch");

    Conv2dGrads out;
    out.dweight = Tensor(weight.shape());
    if (need_dx) out.dx = Tensor(x.shape());
    if (has_bias) out.dbias = Tensor({g.out_c});

    const bool pointwise = is_pointwise(g);
    Tensor scratch_cols, scratch_dcols;
    if (!pointwise) {
        if (!cols_cache) scratch_cols = Tensor({K, P});
        if (need_dx) scratch_dcols = Tensor({K, P});
    }

    // Sample-sequential accumulation keeps the weight gradient bit-stable
    // for any worker count.
    for (std::int64_t n = 0; n < N; ++n) {
        const float* xn = x.data() + n * g.in_c * g.in_h * g.in_w;
        const float* dyn = dy.data() + n * g.out_c * P;
        const float* cols = xn;
        if (!pointwise) {
            if (cols_cache) {
                cols = cols_cache->data() + n * K * P;
            } else {
                im2col(xn, g, scratch_cols.data());
                cols = scratch_cols.data();
            }
        }
        // dW += dY * cols^T
        gemm(dyn, cols, out.dweight.data(), g.out_c, P, K, false, true, true);
        if (has_bias) {
            for (std::int64_t co = 0; co < g.out_c; ++co) {
                double s = 0.0;
                const float* row = dyn + co * P;
                for (std::int64_t i = 0; i < P; ++i) s += row[i];
                out.dbias[static_cast<std::size_t>(co)] += static_cast<float>(s);
            }
        }
        if (need_dx) {
            float* dxn = out.dx.data() + n * g.in_c * g.in_h * g.in_w;
            if (pointwise) {
                gemm(weight.data(), dyn, dxn, g.in_c, g.out_c, P, true, false, false);
            } else {
                gemm(weight.data(), dyn, scratch_dcols.data(), K, g.out_c, P, true, false, false);
                col2im_accumulate(scratch_dcols.data(), g, dxn);
            }
        }
    }
    return out;
}

Tensor conv_transpose2d_forward(const Tensor& x, const Tensor& weight, std::int64_t stride,
                                std::int64_t pad, std::int64_t output_pad) {
    if (x.rank() != 4 || weight.rank() != 4) throw ContractError("conv_transpose expects rank-4");
    if (x.dim(1) != weight.dim(0)) throw ContractError("conv_transpose channel mismatch");
    if (output_pad >= stride) throw SpecError("output_pad must be < stride");
    const std::int64_t N = x.dim(0), ci = weight.dim(0), co = weight.dim(1), k = weight.dim(2);
    const std::int64_t h = x.dim(2), w = x.dim(3);
    const std::int64_t oh = (h - 1) * stride - 2 * pad + k + output_pad;
    const std::int64_t ow = (w - 1) * stride - 2 * pad + k + output_pad;
    // Geometry of the adjoint conv (output space -> input space).
    const ConvGeom g = make_conv_geom(co, oh, ow, ci, k, stride, pad);
    if (g.out_h != h || g.out_w != w) throw SpecError("conv_transpose geometry mismatch");

    const std::int64_t K = co * k * k;
    const std::int64_t P = h * w;
    Tensor y({N, co, oh, ow});
    Tensor scratch({K, P});
    for (std::int64_t n = 0; n < N; ++n) {
        const float* xn = x.data() + n * ci * P;
        // cols = W^T [K x ci] * x [ci x P]
        gemm(weight.data(), xn, scratch.data(), K, ci, P, true, false, false);
        col2im_accumulate(scratch.data(), g, y.data() + n * co * oh * ow);
    }
    return y;
}

ConvT2dGrads conv_transpose2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                                       std::int64_t stride, std::int64_t pad,
                                       std::int64_t output_pad, bool need_dx) {
    const std::int64_t N = x.dim(0), ci = weight.dim(0), co = weight.dim(1), k = weight.dim(2);
    const std::int64_t h = x.dim(2), w = x.dim(3);
    const std::int64_t oh = (h - 1) * stride - 2 * pad + k + output_pad;
    const std::int64_t ow = (w - 1) * stride - 2 * pad + k + output_pad;
    if (dy.dim(0) != N || dy.dim(1) != co || dy.dim(2) != oh || dy.dim(3) != ow)
        throw ContractError("conv_transpose2d_backward: dy shape mismatch");
    const ConvGeom g = make_conv_geom(co, oh, ow, ci, k, stride, pad);

    const std::int64_t K = co * k * k;
    const std::int64_t P = h * w;
    ConvT2dGrads out;
    out.dweight = Tensor(weight.shape());
    if (need_dx) out.dx = Tensor(x.shape());

    Tensor cols({K, P});
    for (std::int64_t n = 0; n < N; ++n) {
        const float* dyn = dy.data() + n * co * oh * ow;
        const float* xn = x.data() + n * ci * P;
        im2col(dyn, g, cols.data());
        // dW [ci x K] += x [ci x P] * cols^T
        gemm(xn, cols.data(), out.dweight.data(), ci, P, K, false, true, true);
        if (need_dx) {
            // dx [ci x P] = W [ci x K] * cols
            gemm(weight.data(), cols.data(), out.dx.data() + n * ci * P, ci, K, P);
        }
    }
    return out;
}

Tensor batchnorm_forward_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                               Tensor& running_mean, Tensor& running_var, double momentum,
                               double eps, BatchNormCache& cache) {
    const std::int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    const std::int64_t M = N * HW;
    if (M < 2) throw ContractError("batchnorm needs at least 2 values per channel");
    Tensor y(x.shape());
    if (cache.xhat.shape() != x.shape()) cache.xhat = Tensor(x.shape());
    cache.inv_std.assign(static_cast<std::size_t>(C), 0.0);

    parallel_for(0, C, [&](std::int64_t c) {
        double sum = 0.0, sq = 0.0;
        for (std::int64_t n = 0; n < N; ++n) {
            const float* p = x.data() + (n * C + c) * HW;
            for (std::int64_t i = 0; i < HW; ++i) {
                sum += p[i];
                sq += static_cast<double>(p[i]) * p[i];
            }
        }
        const double mean = sum / static_cast<double>(M);
        double var = sq / static_cast<double>(M) - mean * mean;
        if (var < 0.0) var = 0.0;
        const double inv = 1.0 / std::sqrt(var + eps);
        cache.inv_std[static_cast<std::size_t>(c)] = inv;
        const float gc = gamma[static_cast<std::size_t>(c)];
        const float bc = beta[static_cast<std::size_t>(c)];
        for (std::int64_t n = 0; n < N; ++n) {
            const float* p = x.data() + (n * C + c) * HW;
            float* xh = cache.xhat.data() + (n * C + c) * HW;
            float* yo = y.data() + (n * C + c) * HW;
            for (std::int64_t i = 0; i < HW; ++i) {
                float v = static_cast<float>((p[i] - mean) * inv);
                xh[i] = v;
                yo[i] = gc * v + bc;
            }
        }
        const double unbiased = var * static_cast<double>(M) / static_cast<double>(M - 1);
        auto& rm = running_mean[static_cast<std::size_t>(c)];
        auto& rv = running_var[static_cast<std::size_t>(c)];
        rm = static_cast<float>((1.0 - momentum) * rm + momentum * mean);
        rv = static_cast<float>((1.0 - momentum) * rv + momentum * unbiased);
    });
    return y;
}

Tensor batchnorm_forward_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                              const Tensor& running_mean, const Tensor& running_var, double eps) {
    const std::int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    Tensor y(x.shape());
    parallel_for(0, C, [&](std::int64_t c) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(running_var[static_cast<std::size_t>(c)]) + eps);
        const double scale = gamma[static_cast<std::size_t>(c)] * inv;
        const double shift =
            beta[static_cast<std::size_t>(c)] - running_mean[static_cast<std::size_t>(c)] * scale;
        for (std::int64_t n = 0; n < N; ++n) {
            const float* p = x.data() + (n * C + c) * HW;
            float* yo = y.data() + (n * C + c) * HW;
            for (std::int64_t i = 0; i < HW; ++i)
                yo[i] = static_cast<float>(p[i] * scale + shift);
        }
    });
    return y;
}

BatchNormGrads batchnorm_backward(const Tensor& dy, const Tensor& gamma,
                                  const BatchNormCache& cache) {
    const std::int64_t N = dy.dim(0), C = dy.dim(1), HW = dy.dim(2) * dy.dim(3);
    const double M = static_cast<double>(N * HW);
    BatchNormGrads g;
    g.dx = Tensor(dy.shape());
    g.dgamma = Tensor({C});
    g.dbeta = Tensor({C});
    parallel_for(0, C, [&](std::int64_t c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::int64_t n = 0; n < N; ++n) {
            const float* d = dy.data() + (n * C + c) * HW;
            const float* xh = cache.xhat.data() + (n * C + c) * HW;
            for (std::int64_t i = 0; i < HW; ++i) {
                sum_dy += d[i];
                sum_dy_xhat += static_cast<double>(d[i]) * xh[i];
            }
        }
        g.dgamma[static_cast<std::size_t>(c)] = static_cast<float>(sum_dy_xhat);
        g.dbeta[static_cast<std::size_t>(c)] = static_cast<float>(sum_dy);
        const double k = gamma[static_cast<std::size_t>(c)] * cache.inv_std[static_cast<std::size_t>(c)];
        const double mean_dy = sum_dy / M;
        const double mean_dy_xhat = sum_dy_xhat / M;
        for (std::int64_t n = 0; n < N; ++n) {
            const float* d = dy.data() + (n * C + c) * HW;
            const float* xh = cache.xhat.data() + (n * C + c) * HW;
            float* dx = g.dx.data() + (n * C + c) * HW;
            for (std::int64_t i = 0; i < HW; ++i)
                dx[i] = static_cast<float>(k * (d[i] - mean_dy - xh[i] * mean_dy_xhat));
        }
    });
    return g;
}

Tensor leaky_relu_forward(const Tensor& x, float negative_slope) {
    Tensor y(x.shape());
    const float* in = x.data();
    float* out = y.data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : negative_slope * in[i];
    return y;
}

Tensor leaky_relu_backward(const Tensor& dy, const Tensor& y, float negative_slope) {
    Tensor dx(dy.shape());
    const float* d = dy.data();
    const float* yv = y.data();
    float* out = dx.data();
    const std::int64_t n = dy.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = yv[i] > 0.0f ? d[i] : negative_slope * d[i];
    return dx;
}

Tensor dropout_forward_train(const Tensor& x, float p, Rng& rng, Tensor& mask) {
    if (p < 0.0f || p >= 1.0f) throw SpecError("dropout probability must be in [0, 1)");
    if (mask.shape() != x.shape()) mask = Tensor(x.shape());
    Tensor y(x.shape());
    const float keep_scale = 1.0f / (1.0f - p);
    const std::int64_t n = x.numel();
    const float* in = x.data();
    float* mp = mask.data();
    float* out = y.data();
    for (std::int64_t i = 0; i < n; ++i) {
        float m = rng.uniform() >= p ? keep_scale : 0.0f;
        mp[i] = m;
        out[i] = in[i] * m;
    }
    return y;
}

Tensor dropout_backward(const Tensor& dy, const Tensor& mask) {
    Tensor dx(dy.shape());
    const std::int64_t n = dy.numel();
    const float* d = dy.data();
    const float* mp = mask.data();
    float* out = dx.data();
    for (std::int64_t i = 0; i < n; ++i) out[i] = d[i] * mp[i];
    return dx;
}

void relu_inplace(Tensor& x) {
    float* p = x.data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) p[i] = p[i] > 0.0f ? p[i] : 0.0f;
}

Tensor maxpool_3x3_s2(const Tensor& x) {
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t oh = conv_out_size(H, 3, 2, 1), ow = conv_out_size(W, 3, 2, 1);
    Tensor y({N, C, oh, ow});
    parallel_for(0, N * C, [&](std::int64_t nc) {
        const float* in = x.data() + nc * H * W;
        float* out = y.data() + nc * oh * ow;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
            for (std::int64_t ox = 0; ox < ow; ++ox) {
                float best = -std::numeric_limits<float>::infinity();
                for (std::int64_t ky = 0; ky < 3; ++ky) {
                    std::int64_t iy = oy * 2 + ky - 1;
                    if (iy < 0 || iy >= H) continue;
                    for (std::int64_t kx = 0; kx < 3; ++kx) {
                        std::int64_t ix = ox * 2 + kx - 1;
                        if (ix < 0 || ix >= W) continue;
                        best = std::max(best, in[iy * W + ix]);
                    }
                }
                out[oy * ow + ox] = best;
            }
        }
    });
    return y;
}

}  // namespace fae::nn
