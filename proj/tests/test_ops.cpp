#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "fae/common.hpp"
#include "fae/nn/ops.hpp"
#include "fae/tensor.hpp"

using fae::Rng;
using fae::Tensor;
namespace nn = fae::nn;

namespace {

double dot(const Tensor& a, const Tensor& b) {
    REQUIRE(a.numel() == b.numel());
    double s = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        s += static_cast<double>(a[static_cast<std::size_t>(i)]) *
             static_cast<double>(b[static_cast<std::size_t>(i)]);
    return s;
}

// Direct seven-loop convolution in double arithmetic.
Tensor conv_reference(const Tensor& x, const Tensor& w, const float* bias, std::int64_t s,
                      std::int64_t p) {
    const std::int64_t n = x.dim(0), ic = x.dim(1), h = x.dim(2), ww = x.dim(3);
    const std::int64_t oc = w.dim(0), k = w.dim(2);
    const std::int64_t oh = nn::conv_out_size(h, k, s, p);
    const std::int64_t ow = nn::conv_out_size(ww, k, s, p);
    Tensor y({n, oc, oh, ow});
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t o = 0; o < oc; ++o)
            for (std::int64_t oy = 0; oy < oh; ++oy)
                for (std::int64_t ox = 0; ox < ow; ++ox) {
                    double acc = bias ? static_cast<double>(bias[o]) : 0.0;
                    for (std::int64_t c = 0; c < ic; ++c)
                        for (std::int64_t ky = 0; ky < k; ++ky)
                            for (std::int64_t kx = 0; kx < k; ++kx) {
                                const std::int64_t iy = oy * s + ky - p;
                                const std::int64_t ix = ox * s + kx - p;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= ww) continue;
                                acc += static_cast<double>(x.at(b, c, iy, ix)) *
                                       static_cast<double>(w.at(o, c, ky, kx));
                            }
                    y.at(b, o, oy, ox) = static_cast<float>(acc);
                }
    return y;
}

// Direct transpose convolution: every input pixel scatters a weighted kernel.
Tensor convt_reference(const Tensor& x, const Tensor& w, std::int64_t s, std::int64_t p,
                       std::int64_t op) {
    const std::int64_t n = x.dim(0), ic = x.dim(1), h = x.dim(2), ww = x.dim(3);
    const std::int64_t oc = w.dim(1), k = w.dim(2);
    const std::int64_t oh = (h - 1) * s - 2 * p + k + op;
    const std::int64_t ow = (ww - 1) * s - 2 * p + k + op;
    Tensor y({n, oc, oh, ow});
    std::vector<double> acc;
    for (std::int64_t b = 0; b < n; ++b) {
        acc.assign(static_cast<std::size_t>(oc * oh * ow), 0.0);
        for (std::int64_t c = 0; c < ic; ++c)
            for (std::int64_t iy = 0; iy < h; ++iy)
                for (std::int64_t ix = 0; ix < ww; ++ix) {
                    const double v = x.at(b, c, iy, ix);
                    for (std::int64_t o = 0; o < oc; ++o)
                        for (std::int64_t ky = 0; ky < k; ++ky)
                            for (std::int64_t kx = 0; kx < k; ++kx) {
                                const std::int64_t oy = iy * s + ky - p;
                                const std::int64_t ox = ix * s + kx - p;
                                if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) continue;
                                acc[static_cast<std::size_t>((o * oh + oy) * ow + ox)] +=
                                    v * static_cast<double>(w.at(c, o, ky, kx));
                            }
                }
        for (std::int64_t i = 0; i < oc * oh * ow; ++i)
            y[static_cast<std::size_t>(b * oc * oh * ow + i)] =
                static_cast<float>(acc[static_cast<std::size_t>(i)]);
    }
    return y;
}

void check_close(const Tensor& got, const Tensor& want, double tol) {
    REQUIRE(got.shape() == want.shape());
    for (std::int64_t i = 0; i < got.numel(); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        CHECK(std::fabs(static_cast<double>(got[idx]) - static_cast<double>(want[idx])) <=
              tol * std::max(1.0, std::fabs(static_cast<double>(want[idx]))));
    }
}

}  // namespace

TEST_CASE("output size arithmetic") {
    CHECK(nn::conv_out_size(32, 5, 2, 2) == 16);
    CHECK(nn::conv_out_size(8, 3, 2, 1) == 4);
    CHECK(nn::conv_out_size(128, 7, 2, 3) == 64);
    CHECK(nn::conv_out_size(5, 5, 1, 0) == 1);
}

TEST_CASE("matrix multiply matches a naive triple loop in all layouts") {
    Rng rng(40);
    const std::int64_t m = 5, k = 4, n = 6;
    for (bool ta : {false, true}) {
        for (bool tb : {false, true}) {
            const Tensor a = Tensor::rand_uniform({ta ? k : m, ta ? m : k}, rng, -1.0f, 1.0f);
            const Tensor b = Tensor::rand_uniform({tb ? n : k, tb ? k : n}, rng, -1.0f, 1.0f);
            auto av = [&](std::int64_t i, std::int64_t l) {
                return static_cast<double>(ta ? a.at(l, i) : a.at(i, l));
            };
            auto bv = [&](std::int64_t l, std::int64_t j) {
                return static_cast<double>(tb ? b.at(j, l) : b.at(l, j));
            };
            for (bool accumulate : {false, true}) {
                Tensor c = Tensor::full({m, n}, accumulate ? 0.5f : -9.0f);
                Tensor ref = c;
                nn::gemm(a.data(), b.data(), c.data(), m, k, n, ta, tb, accumulate);
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t j = 0; j < n; ++j) {
                        double acc = accumulate ? static_cast<double>(ref.at(i, j)) : 0.0;
                        for (std::int64_t l = 0; l < k; ++l) acc += av(i, l) * bv(l, j);
                        CHECK(c.at(i, j) == doctest::Approx(acc).epsilon(1e-5).scale(1.0));
                    }
            }
        }
    }
}

TEST_CASE("patch matrix layout is exact") {
    Rng rng(41);
    const Tensor x = Tensor::rand_uniform({1, 2, 4, 4}, rng, -1.0f, 1.0f);
    const nn::ConvGeom g = nn::make_conv_geom(2, 4, 4, 1, 3, 1, 1);
    REQUIRE(g.out_h == 4);
    REQUIRE(g.out_w == 4);
    Tensor cols({2 * 9, 16});
    nn::im2col(x.data(), g, cols.data());
    for (std::int64_t c = 0; c < 2; ++c)
        for (std::int64_t ky = 0; ky < 3; ++ky)
            for (std::int64_t kx = 0; kx < 3; ++kx)
                for (std::int64_t oy = 0; oy < 4; ++oy)
                    for (std::int64_t ox = 0; ox < 4; ++ox) {
                        const std::int64_t iy = oy + ky - 1, ix = ox + kx - 1;
                        const float want = (iy < 0 || iy >= 4 || ix < 0 || ix >= 4)
                                               ? 0.0f
                                               : x.at(0, c, iy, ix);
                        CHECK(cols.at((c * 3 + ky) * 3 + kx, oy * 4 + ox) == want);
                    }
}

TEST_CASE("patch scatter is the adjoint of patch gather") {
    Rng rng(42);
    const nn::ConvGeom g = nn::make_conv_geom(3, 7, 6, 4, 3, 2, 1);
    const Tensor x = Tensor::rand_uniform({3, 7, 6}, rng, -1.0f, 1.0f);
    Tensor cols({3 * 9, g.out_h * g.out_w});
    nn::im2col(x.data(), g, cols.data());
    const Tensor c = Tensor::rand_uniform(cols.shape(), rng, -1.0f, 1.0f);
    Tensor back({3, 7, 6});
    nn::col2im_accumulate(c.data(), g, back.data());
    CHECK(dot(cols, c) == doctest::Approx(dot(x, back)).epsilon(1e-5));
}

TEST_CASE("convolution forward matches the direct reference") {
    Rng rng(43);
    const Tensor x = Tensor::rand_uniform({2, 3, 9, 8}, rng, -1.0f, 1.0f);
    const Tensor w = Tensor::rand_uniform({4, 3, 3, 3}, rng, -0.5f, 0.5f);
    const Tensor bias = Tensor::rand_uniform({4}, rng, -0.5f, 0.5f);

    check_close(nn::conv2d_forward(x, w, bias.data(), 2, 1), conv_reference(x, w, bias.data(), 2, 1),
                1e-5);
    check_close(nn::conv2d_forward(x, w, nullptr, 1, 1), conv_reference(x, w, nullptr, 1, 1), 1e-5);
    // 1x1 kernel degenerate case.
    const Tensor w1 = Tensor::rand_uniform({2, 3, 1, 1}, rng, -0.5f, 0.5f);
    check_close(nn::conv2d_forward(x, w1, nullptr, 1, 0), conv_reference(x, w1, nullptr, 1, 0),
                1e-5);
    CHECK_THROWS_AS(nn::conv2d_forward(x, Tensor({4, 2, 3, 3}), nullptr, 1, 1),
                    fae::ContractError);
}

TEST_CASE("convolution gradients satisfy the linearity identities") {
    Rng rng(44);
    const Tensor x = Tensor::rand_uniform({2, 3, 9, 8}, rng, -1.0f, 1.0f);
    const Tensor w = Tensor::rand_uniform({4, 3, 3, 3}, rng, -0.5f, 0.5f);
    const Tensor bias = Tensor::rand_uniform({4}, rng, -0.5f, 0.5f);
    const Tensor y = nn::conv2d_forward(x, w, bias.data(), 2, 1);
    const Tensor dy = Tensor::rand_uniform(y.shape(), rng, -1.0f, 1.0f);

    // The map is linear in x, in w, and affine in bias, so the directional
    // identities <dy, y> = <dx, x> + <dbias, bias> = <dw, w> + <dbias, bias>
    // hold up to float rounding.
    const nn::Conv2dGrads g = nn::conv2d_backward(x, w, dy, 2, 1, true, nullptr, true);
    const double loss = dot(dy, y);
    CHECK(dot(g.dx, x) + dot(g.dbias, bias) == doctest::Approx(loss).epsilon(1e-4));
    CHECK(dot(g.dweight, w) + dot(g.dbias, bias) == doctest::Approx(loss).epsilon(1e-4));

    // dbias is the per-channel sum of dy.
    for (std::int64_t o = 0; o < 4; ++o) {
        double s = 0.0;
        for (std::int64_t b = 0; b < 2; ++b)
            for (std::int64_t oy = 0; oy < y.dim(2); ++oy)
                for (std::int64_t ox = 0; ox < y.dim(3); ++ox) s += dy.at(b, o, oy, ox);
        CHECK(g.dbias[static_cast<std::size_t>(o)] == doctest::Approx(s).epsilon(1e-5));
    }

    // Skipping dx leaves it empty; the cached-columns path changes nothing.
    const nn::Conv2dGrads g2 = nn::conv2d_backward(x, w, dy, 2, 1, true, nullptr, false);
    CHECK(g2.dx.empty());
    check_close(g2.dweight, g.dweight, 0.0);

    Tensor cache;
    const Tensor y2 = nn::conv2d_forward(x, w, bias.data(), 2, 1, &cache);
    check_close(y2, y, 0.0);
    const nn::Conv2dGrads g3 = nn::conv2d_backward(x, w, dy, 2, 1, true, &cache, true);
    check_close(g3.dweight, g.dweight, 0.0);
    check_close(g3.dx, g.dx, 0.0);
}

TEST_CASE("transpose convolution matches the direct scatter reference") {
    Rng rng(45);
    const Tensor x = Tensor::rand_uniform({2, 3, 4, 5}, rng, -1.0f, 1.0f);
    const Tensor w = Tensor::rand_uniform({3, 2, 5, 5}, rng, -0.5f, 0.5f);
    const Tensor y = nn::conv_transpose2d_forward(x, w, 2, 2, 1);
    CHECK(y.shape() == std::vector<std::int64_t>{2, 2, 8, 10});
    check_close(y, convt_reference(x, w, 2, 2, 1), 1e-5);
    CHECK_THROWS_AS(nn::conv_transpose2d_forward(x, Tensor({2, 2, 5, 5}), 2, 2, 1),
                    fae::ContractError);
}

TEST_CASE("transpose convolution is the adjoint of convolution") {
    Rng rng(46);
    // Up: [3ch 4x5] -> [2ch 8x10]; down with the same weight: [2ch 8x10] -> [3ch 4x5].
    const Tensor x = Tensor::rand_uniform({2, 3, 4, 5}, rng, -1.0f, 1.0f);
    const Tensor w = Tensor::rand_uniform({3, 2, 5, 5}, rng, -0.5f, 0.5f);
    const Tensor z = Tensor::rand_uniform({2, 2, 8, 10}, rng, -1.0f, 1.0f);

    const Tensor up = nn::conv_transpose2d_forward(x, w, 2, 2, 1);
    const Tensor down = nn::conv2d_forward(z, w, nullptr, 2, 2);
    REQUIRE(down.shape() == x.shape());
    CHECK(dot(up, z) == doctest::Approx(dot(x, down)).epsilon(1e-4));
}

TEST_CASE("transpose convolution gradients satisfy the linearity identities") {
    Rng rng(47);
    const Tensor x = Tensor::rand_uniform({2, 3, 4, 5}, rng, -1.0f, 1.0f);
    const Tensor w = Tensor::rand_uniform({3, 2, 5, 5}, rng, -0.5f, 0.5f);
    const Tensor y = nn::conv_transpose2d_forward(x, w, 2, 2, 1);
    const Tensor dy = Tensor::rand_uniform(y.shape(), rng, -1.0f, 1.0f);

    const nn::ConvT2dGrads g = nn::conv_transpose2d_backward(x, w, dy, 2, 2, 1, true);
    const double loss = dot(dy, y);
    CHECK(dot(g.dx, x) == doctest::Approx(loss).epsilon(1e-4));
    CHECK(dot(g.dweight, w) == doctest::Approx(loss).epsilon(1e-4));

    const nn::ConvT2dGrads g2 = nn::conv_transpose2d_backward(x, w, dy, 2, 2, 1, false);
    CHECK(g2.dx.empty());
    check_close(g2.dweight, g.dweight, 0.0);
}

TEST_CASE("batchnorm training forward normalizes against a direct reference") {
    Rng rng(48);
    const std::int64_t N = 3, C = 2, H = 4, W = 5;
    const Tensor x = Tensor::rand_uniform({N, C, H, W}, rng, -2.0f, 3.0f);
    Tensor gamma = Tensor::full({C}, 1.5f);
    Tensor beta = Tensor::full({C}, -0.25f);
    gamma[1] = 0.5f;
    beta[1] = 1.0f;
    Tensor rm({C}), rv = Tensor::full({C}, 1.0f);
    const Tensor rm0 = rm, rv0 = rv;
    const double momentum = 0.1, eps = 1e-5;

    nn::BatchNormCache cache;
    const Tensor y = nn::batchnorm_forward_train(x, gamma, beta, rm, rv, momentum, eps, cache);

    const double M = static_cast<double>(N * H * W);
    for (std::int64_t c = 0; c < C; ++c) {
        double sum = 0.0, sq = 0.0;
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t i = 0; i < H * W; ++i) {
                const double v = x[static_cast<std::size_t>((n * C + c) * H * W + i)];
                sum += v;
                sq += v * v;
            }
        const double mean = sum / M;
        const double var = sq / M - mean * mean;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t i = 0; i < H * W; ++i) {
                const auto idx = static_cast<std::size_t>((n * C + c) * H * W + i);
                const double xhat = (static_cast<double>(x[idx]) - mean) * inv;
                const double want = static_cast<double>(gamma[static_cast<std::size_t>(c)]) * xhat +
                                    static_cast<double>(beta[static_cast<std::size_t>(c)]);
                CHECK(y[idx] == doctest::Approx(want).epsilon(1e-5).scale(1.0));
                CHECK(cache.xhat[idx] == doctest::Approx(xhat).epsilon(1e-5).scale(1.0));
            }
        // Running statistics blend with the unbiased variance.
        const double unbiased = var * M / (M - 1.0);
        CHECK(rm[static_cast<std::size_t>(c)] ==
              doctest::Approx((1.0 - momentum) * rm0[static_cast<std::size_t>(c)] +
                              momentum * mean)
                  .epsilon(1e-6));
        CHECK(rv[static_cast<std::size_t>(c)] ==
              doctest::Approx((1.0 - momentum) * rv0[static_cast<std::size_t>(c)] +
                              momentum * unbiased)
                  .epsilon(1e-6));
    }

    CHECK_THROWS_AS(nn::batchnorm_forward_train(Tensor({1, 2, 1, 1}), gamma, beta, rm, rv,
                                                momentum, eps, cache),
                    fae::ContractError);
}

TEST_CASE("batchnorm eval forward applies the frozen affine map") {
    Rng rng(49);
    const Tensor x = Tensor::rand_uniform({2, 3, 3, 3}, rng, -1.0f, 1.0f);
    const Tensor gamma = Tensor::rand_uniform({3}, rng, 0.5f, 1.5f);
    const Tensor beta = Tensor::rand_uniform({3}, rng, -0.5f, 0.5f);
    const Tensor rm = Tensor::rand_uniform({3}, rng, -0.5f, 0.5f);
    const Tensor rv = Tensor::rand_uniform({3}, rng, 0.5f, 2.0f);
    const double eps = 1e-5;
    const Tensor y = nn::batchnorm_forward_eval(x, gamma, beta, rm, rv, eps);
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t c = 0; c < 3; ++c)
            for (std::int64_t i = 0; i < 9; ++i) {
                const auto idx = static_cast<std::size_t>((n * 3 + c) * 9 + i);
                const auto cc = static_cast<std::size_t>(c);
                const double want =
                    static_cast<double>(gamma[cc]) *
                        (static_cast<double>(x[idx]) - static_cast<double>(rm[cc])) /
                        std::sqrt(static_cast<double>(rv[cc]) + eps) +
                    static_cast<double>(beta[cc]);
                CHECK(y[idx] == doctest::Approx(want).epsilon(1e-5).scale(1.0));
            }
}

TEST_CASE("batchnorm backward matches finite differences") {
    Rng rng(50);
    const std::int64_t N = 3, C = 2, H = 4, W = 4;
    Tensor x = Tensor::rand_uniform({N, C, H, W}, rng, -1.0f, 1.0f);
    Tensor gamma = Tensor::rand_uniform({C}, rng, 0.5f, 1.5f);
    Tensor beta = Tensor::rand_uniform({C}, rng, -0.5f, 0.5f);
    const Tensor r = Tensor::rand_uniform({N, C, H, W}, rng, -1.0f, 1.0f);
    const double eps = 1e-5;

    auto loss_of = [&]() {
        Tensor rm({C}), rv({C});
        nn::BatchNormCache cache;
        const Tensor y = nn::batchnorm_forward_train(x, gamma, beta, rm, rv, 0.1, eps, cache);
        return dot(r, y);
    };

    Tensor rm({C}), rv({C});
    nn::BatchNormCache cache;
    const Tensor y = nn::batchnorm_forward_train(x, gamma, beta, rm, rv, 0.1, eps, cache);
    const nn::BatchNormGrads g = nn::batchnorm_backward(r, gamma, cache);
    REQUIRE(g.dx.shape() == x.shape());

    const float step = 1e-2f;
    auto fd_param = [&](Tensor& t, const Tensor& grad, std::int64_t stride_hint) {
        for (std::int64_t i = 0; i < t.numel(); i += stride_hint) {
            const auto idx = static_cast<std::size_t>(i);
            const float orig = t[idx];
            const float plus = orig + step, minus = orig - step;
            t[idx] = plus;
            const double fp = loss_of();
            t[idx] = minus;
            const double fm = loss_of();
            t[idx] = orig;
            const double fd =
                (fp - fm) / (static_cast<double>(plus) - static_cast<double>(minus));
            CHECK(std::fabs(fd - static_cast<double>(grad[idx])) <=
                  2e-3 + 2e-2 * std::fabs(static_cast<double>(grad[idx])));
        }
    };
    fd_param(x, g.dx, 11);
    fd_param(gamma, g.dgamma, 1);
    fd_param(beta, g.dbeta, 1);

    // dbeta is the plain per-channel sum of the upstream gradient.
    for (std::int64_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t i = 0; i < H * W; ++i)
                s += r[static_cast<std::size_t>((n * C + c) * H * W + i)];
        CHECK(g.dbeta[static_cast<std::size_t>(c)] == doctest::Approx(s).epsilon(1e-5));
    }
}

TEST_CASE("leaky relu forward and backward gate by sign") {
    Tensor x({5});
    x[0] = -2.0f;
    x[1] = -0.5f;
    x[2] = 0.0f;
    x[3] = 0.5f;
    x[4] = 3.0f;
    const float slope = 0.01f;
    const Tensor y = nn::leaky_relu_forward(x, slope);
    CHECK(y[0] == -2.0f * slope);
    CHECK(y[1] == -0.5f * slope);
    CHECK(y[2] == 0.0f);
    CHECK(y[3] == 0.5f);
    CHECK(y[4] == 3.0f);

    Tensor dy = Tensor::full({5}, 1.0f);
    // The gate input has the same sign pattern whether the caller passes the
    // layer input or output; zero falls into the damped branch.
    const Tensor dx = nn::leaky_relu_backward(dy, x, slope);
    CHECK(dx[0] == slope);
    CHECK(dx[1] == slope);
    CHECK(dx[2] == slope);
    CHECK(dx[3] == 1.0f);
    CHECK(dx[4] == 1.0f);
}

TEST_CASE("dropout masks, rescales, and reproduces by seed") {
    Rng rng(60);
    const Tensor x = Tensor::rand_uniform({64, 64}, rng, 0.5f, 1.5f);

    Rng d0(100);
    Tensor mask0;
    const Tensor y0 = nn::dropout_forward_train(x, 0.0f, d0, mask0);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        CHECK(y0[static_cast<std::size_t>(i)] == x[static_cast<std::size_t>(i)]);
        CHECK(mask0[static_cast<std::size_t>(i)] == 1.0f);
    }

    Rng d1(100);
    Tensor mask1;
    const Tensor y1 = nn::dropout_forward_train(x, 0.5f, d1, mask1);
    std::int64_t zeros = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        REQUIRE((mask1[idx] == 0.0f || mask1[idx] == 2.0f));
        CHECK(y1[idx] == x[idx] * mask1[idx]);
        zeros += mask1[idx] == 0.0f;
    }
    // 4096 fair coin flips: expect 2048 +- 4 sigma (sigma = 32).
    CHECK(std::abs(zeros - 2048) < 160);

    Rng d2(100);
    Tensor mask2;
    nn::dropout_forward_train(x, 0.5f, d2, mask2);
    for (std::int64_t i = 0; i < x.numel(); ++i)
        CHECK(mask2[static_cast<std::size_t>(i)] == mask1[static_cast<std::size_t>(i)]);

    const Tensor dy = Tensor::rand_uniform({64, 64}, rng, -1.0f, 1.0f);
    const Tensor dx = nn::dropout_backward(dy, mask1);
    for (std::int64_t i = 0; i < dy.numel(); ++i)
        CHECK(dx[static_cast<std::size_t>(i)] ==
              dy[static_cast<std::size_t>(i)] * mask1[static_cast<std::size_t>(i)]);

    Rng d3(1);
    Tensor m;
    CHECK_THROWS_AS(nn::dropout_forward_train(x, 1.0f, d3, m), fae::SpecError);
    CHECK_THROWS_AS(nn::dropout_forward_train(x, -0.1f, d3, m), fae::SpecError);
}

TEST_CASE("max pooling takes true window maxima with edge truncation") {
    Rng rng(61);
    // All-negative values expose any zero-initialized padding shortcut.
    const Tensor x = Tensor::rand_uniform({2, 3, 7, 6}, rng, -5.0f, -1.0f);
    const Tensor y = nn::maxpool_3x3_s2(x);
    REQUIRE(y.shape() == std::vector<std::int64_t>{2, 3, 4, 3});
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t c = 0; c < 3; ++c)
            for (std::int64_t oy = 0; oy < 4; ++oy)
                for (std::int64_t ox = 0; ox < 3; ++ox) {
                    float best = -std::numeric_limits<float>::infinity();
                    for (std::int64_t ky = 0; ky < 3; ++ky)
                        for (std::int64_t kx = 0; kx < 3; ++kx) {
                            const std::int64_t iy = oy * 2 + ky - 1;
                            const std::int64_t ix = ox * 2 + kx - 1;
                            if (iy < 0 || iy >= 7 || ix < 0 || ix >= 6) continue;
                            best = std::max(best, x.at(n, c, iy, ix));
                        }
                    CHECK(y.at(n, c, oy, ox) == best);
                }
}

TEST_CASE("relu clamps negatives in place") {
    Tensor x({4});
    x[0] = -1.0f;
    x[1] = 2.0f;
    x[2] = -0.0f;
    x[3] = 0.25f;
    nn::relu_inplace(x);
    CHECK(x[0] == 0.0f);
    CHECK(x[1] == 2.0f);
    CHECK(x[2] == 0.0f);
    CHECK(x[3] == 0.25f);
}
