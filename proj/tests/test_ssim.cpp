#include "doctest.h"

#include <cmath>
#include <vector>

#include "fae/ssim/ssim.hpp"
#include "fae/tensor.hpp"
#include "support/oracles.hpp"

using fae::Rng;
using fae::Tensor;
using fae::ssim::SsimConfig;
using fae::ssim::WindowKind;

namespace {

SsimConfig default_cfg() {
    return SsimConfig{};  // 11-tap gaussian, sigma 1.5, K1 0.01, K2 0.03, L 1
}

oracle::SsimParams oracle_params(const SsimConfig& c) {
    oracle::SsimParams p;
    p.window_size = c.window_size;
    p.gaussian = c.window == WindowKind::gaussian;
    p.sigma = c.sigma;
    p.k1 = c.k1;
    p.k2 = c.k2;
    p.dynamic_range = c.dynamic_range;
    return p;
}

}  // namespace

TEST_CASE("identical inputs score exactly one everywhere") {
    Rng rng(3);
    const Tensor x = Tensor::rand_uniform({2, 3, 16, 20}, rng, 0.0f, 1.0f);
    const Tensor map = fae::ssim::ssim_map(x, x, default_cfg());
    CHECK(map.shape() == std::vector<std::int64_t>{2, 16, 20});
    for (std::int64_t i = 0; i < map.numel(); ++i)
        CHECK(map[static_cast<std::size_t>(i)] == 1.0f);
    CHECK(fae::ssim::mssim(x, x, default_cfg()) == 1.0);
}

TEST_CASE("similarity is symmetric in its arguments") {
    Rng rng(4);
    const Tensor x = Tensor::rand_uniform({1, 2, 15, 13}, rng, 0.0f, 1.0f);
    const Tensor y = Tensor::rand_uniform({1, 2, 15, 13}, rng, 0.0f, 1.0f);
    const Tensor xy = fae::ssim::ssim_map(x, y, default_cfg());
    const Tensor yx = fae::ssim::ssim_map(y, x, default_cfg());
    for (std::int64_t i = 0; i < xy.numel(); ++i)
        CHECK(xy[static_cast<std::size_t>(i)] == yx[static_cast<std::size_t>(i)]);
}

TEST_CASE("constant patches reduce to the closed-form luminance term") {
    // With zero variance the score is (2ab + C1) / (a^2 + b^2 + C1).
    const double a = 0.25, b = 0.75;
    const SsimConfig cfg = default_cfg();
    const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
    const double expected = (2 * a * b + c1) / (a * a + b * b + c1);

    const Tensor xa = Tensor::full({1, 1, 14, 14}, static_cast<float>(a));
    const Tensor yb = Tensor::full({1, 1, 14, 14}, static_cast<float>(b));
    // The map is stored in float32, so comparisons allow one float ulp of play;
    // the scalar mean stays in double and gets a tighter bound.
    const Tensor map = fae::ssim::ssim_map(xa, yb, cfg);
    for (std::int64_t i = 0; i < map.numel(); ++i)
        CHECK(map[static_cast<std::size_t>(i)] == doctest::Approx(expected).epsilon(1e-6));
    CHECK(fae::ssim::mssim(xa, yb, cfg) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("per-pixel map matches direct windowed evaluation") {
    Rng rng(12);
    const std::int64_t b = 2, c = 3, h = 17, w = 13;
    const Tensor x = Tensor::rand_uniform({b, c, h, w}, rng, 0.0f, 1.0f);
    Tensor y = x;
    // Correlated pair: y is x plus structured noise, more informative than
    // two independent fields.
    for (std::int64_t i = 0; i < y.numel(); ++i)
        y[static_cast<std::size_t>(i)] += static_cast<float>(rng.uniform(-0.15, 0.15));

    for (WindowKind kind : {WindowKind::gaussian, WindowKind::uniform}) {
        SsimConfig cfg = default_cfg();
        cfg.window = kind;
        const Tensor map = fae::ssim::ssim_map(x, y, cfg);
        const auto params = oracle_params(cfg);
        for (std::int64_t n = 0; n < b; ++n) {
            for (std::int64_t cy = 0; cy < h; ++cy) {
                for (std::int64_t cx = 0; cx < w; ++cx) {
                    const double ref = oracle::ssim_at(x.data() + n * c * h * w,
                                                       y.data() + n * c * h * w, c, h, w, cy, cx,
                                                       params);
                    // Float storage of the map dominates the error budget.
                    CHECK(map.at(n, cy, cx) ==
                          doctest::Approx(ref).epsilon(1e-6).scale(1.0));
                }
            }
        }
    }
}

TEST_CASE("scalar mean equals the mean of the map") {
    Rng rng(9);
    const Tensor x = Tensor::rand_uniform({2, 2, 13, 18}, rng, 0.0f, 1.0f);
    const Tensor y = Tensor::rand_uniform({2, 2, 13, 18}, rng, 0.0f, 1.0f);
    // The map rounds each value to float before the mean, so agreement is
    // limited by float precision, not double.
    const Tensor map = fae::ssim::ssim_map(x, y, default_cfg());
    CHECK(fae::ssim::mssim(x, y, default_cfg()) ==
          doctest::Approx(map.mean()).epsilon(1e-7));
}

TEST_CASE("score is invariant to joint rescaling with the dynamic range") {
    Rng rng(21);
    const Tensor x = Tensor::rand_uniform({1, 1, 16, 16}, rng, 0.0f, 1.0f);
    const Tensor y = Tensor::rand_uniform({1, 1, 16, 16}, rng, 0.0f, 1.0f);
    SsimConfig base = default_cfg();
    const double s0 = fae::ssim::mssim(x, y, base);

    const float scale = 4.0f;  // power of two: float scaling is exact
    Tensor xs = x, ys = y;
    for (std::int64_t i = 0; i < xs.numel(); ++i) {
        xs[static_cast<std::size_t>(i)] *= scale;
        ys[static_cast<std::size_t>(i)] *= scale;
    }
    SsimConfig scaled = base;
    scaled.dynamic_range = base.dynamic_range * scale;
    CHECK(fae::ssim::mssim(xs, ys, scaled) == doctest::Approx(s0).epsilon(1e-9));
}

TEST_CASE("analytic gradients match central finite differences") {
    Rng rng(33);
    const std::int64_t b = 1, c = 2, h = 12, w = 13;
    Tensor x = Tensor::rand_uniform({b, c, h, w}, rng, 0.1f, 0.9f);
    Tensor y = Tensor::rand_uniform({b, c, h, w}, rng, 0.1f, 0.9f);
    const SsimConfig cfg = default_cfg();

    Tensor dx, dy;
    const double s = fae::ssim::mssim_with_grad(x, y, cfg, &dx, &dy);
    CHECK(s == doctest::Approx(fae::ssim::mssim(x, y, cfg)).epsilon(1e-12));
    REQUIRE(dx.shape() == x.shape());
    REQUIRE(dy.shape() == y.shape());

    const float step = 1e-3f;
    auto fd_check = [&](Tensor& t, const Tensor& grad) {
        // Probe a spread of elements rather than all of them.
        for (std::int64_t i = 0; i < t.numel(); i += 7) {
            const auto idx = static_cast<std::size_t>(i);
            const float orig = t[idx];
            const float plus = orig + step;
            const float minus = orig - step;
            t[idx] = plus;
            const double fp = fae::ssim::mssim(x, y, cfg);
            t[idx] = minus;
            const double fm = fae::ssim::mssim(x, y, cfg);
            t[idx] = orig;
            const double fd =
                (fp - fm) / (static_cast<double>(plus) - static_cast<double>(minus));
            const double g = grad[idx];
            CHECK(std::fabs(fd - g) <= 1e-5 + 2e-3 * std::fabs(g));
        }
    };
    fd_check(x, dx);
    fd_check(y, dy);

    // At a perfect match the score sits at its maximum: zero gradient.
    Tensor dxx;
    fae::ssim::mssim_with_grad(x, x, cfg, &dxx, nullptr);
    for (std::int64_t i = 0; i < dxx.numel(); ++i)
        CHECK(std::fabs(dxx[static_cast<std::size_t>(i)]) <= 1e-8);
}

TEST_CASE("single-precision path tracks the double-precision one") {
    Rng rng(55);
    const Tensor x = Tensor::rand_uniform({2, 2, 16, 16}, rng, 0.0f, 1.0f);
    const Tensor y = Tensor::rand_uniform({2, 2, 16, 16}, rng, 0.0f, 1.0f);
    const SsimConfig cfg = default_cfg();

    Tensor dx64, dy64, dx32, dy32;
    const double s64 = fae::ssim::mssim_with_grad(x, y, cfg, &dx64, &dy64);
    const double s32 = fae::ssim::mssim_with_grad_f32(x, y, cfg, &dx32, &dy32);

    CHECK(std::fabs(s64 - s32) <= 1e-6);
    double gmax = 0.0;
    for (std::int64_t i = 0; i < dx64.numel(); ++i)
        gmax = std::max(gmax, static_cast<double>(std::fabs(dx64[static_cast<std::size_t>(i)])));
    for (std::int64_t i = 0; i < dx64.numel(); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        CHECK(std::fabs(dx64[idx] - dx32[idx]) <= 1e-4 * std::max(1.0, gmax));
        CHECK(std::fabs(dy64[idx] - dy32[idx]) <= 1e-4 * std::max(1.0, gmax));
    }
}

TEST_CASE("range calibrator tracks extremes with a floor") {
    fae::ssim::RangeCalibrator cal;
    CHECK_FALSE(cal.calibrated());
    CHECK_THROWS_AS(cal.dynamic_range(), fae::ContractError);

    Tensor t1({4});
    t1[0] = 0.2f;
    t1[1] = 0.9f;
    t1[2] = 0.5f;
    t1[3] = 0.4f;
    cal.observe(t1);
    CHECK(cal.calibrated());
    // Extremes come from float32 values, so the exact expectation is the
    // difference of their double promotions.
    CHECK(cal.dynamic_range() == static_cast<double>(0.9f) - static_cast<double>(0.2f));

    Tensor t2({2});
    t2[0] = -0.1f;
    t2[1] = 1.4f;
    cal.observe(t2);
    CHECK(cal.batches_seen() == 2);
    CHECK(cal.dynamic_range() == static_cast<double>(1.4f) - static_cast<double>(-0.1f));

    fae::ssim::RangeCalibrator flat;
    flat.observe(Tensor::full({5}, 0.3f));
    CHECK(flat.dynamic_range() == 1e-3);
    CHECK_THROWS_AS(flat.observe(Tensor()), fae::ContractError);
}

TEST_CASE("configuration and shape contracts are enforced") {
    Rng rng(1);
    const Tensor x = Tensor::rand_uniform({1, 1, 16, 16}, rng, 0.0f, 1.0f);
    const Tensor y = Tensor::rand_uniform({1, 1, 16, 17}, rng, 0.0f, 1.0f);
    CHECK_THROWS_AS(fae::ssim::ssim_map(x, y, default_cfg()), fae::ContractError);
    CHECK_THROWS_AS(fae::ssim::ssim_map(x.reshaped({1, 16, 16}), x.reshaped({1, 16, 16}),
                                        default_cfg()),
                    fae::ContractError);

    SsimConfig even = default_cfg();
    even.window_size = 10;
    CHECK_THROWS_AS(fae::ssim::ssim_map(x, x, even), fae::SpecError);

    SsimConfig badk = default_cfg();
    badk.k1 = 0.0;
    CHECK_THROWS_AS(fae::ssim::ssim_map(x, x, badk), fae::SpecError);

    SsimConfig badsigma = default_cfg();
    badsigma.sigma = -1.0;
    CHECK_THROWS_AS(fae::ssim::ssim_map(x, x, badsigma), fae::SpecError);

    SsimConfig badrange = default_cfg();
    badrange.dynamic_range = 0.0;
    CHECK_THROWS_AS(fae::ssim::ssim_map(x, x, badrange), fae::SpecError);

    // Spatial extent below the window size is refused.
    const Tensor tiny = Tensor::full({1, 1, 8, 8}, 0.5f);
    CHECK_THROWS_AS(fae::ssim::ssim_map(tiny, tiny, default_cfg()), fae::ContractError);

    CHECK(fae::ssim::window_kind_name(WindowKind::gaussian) == "gaussian");
    CHECK(fae::ssim::window_kind_name(WindowKind::uniform) == "uniform");
    CHECK(fae::ssim::window_kind_from_name("gaussian") == WindowKind::gaussian);
    CHECK(fae::ssim::window_kind_from_name("uniform") == WindowKind::uniform);
    CHECK_THROWS_AS(fae::ssim::window_kind_from_name("boxcar"), fae::ConfigError);
}
