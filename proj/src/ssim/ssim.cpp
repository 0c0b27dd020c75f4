#include "fae/ssim/ssim.hpp"

#include <algorithm>
#include <vector>

#include "fae/parallel.hpp"

namespace fae::ssim {

namespace {

void check_pair(const Tensor& x, const Tensor& y) {
    if (x.rank() != 4 || y.rank() != 4)
        throw ContractError("ssim: inputs must be [batch, channels, height, width]");
    if (x.shape() != y.shape()) throw ContractError("ssim: input shapes must match");
    if (x.numel() == 0) throw ContractError("ssim: empty input");
}

struct Plan {
    std::vector<double> win;
    double c1 = 0.0, c2 = 0.0;
    std::int64_t b = 0, c = 0, h = 0, w = 0;
};

Plan make_plan(const Tensor& x, const SsimConfig& cfg) {
    cfg.validate();
    Plan p;
    p.win = detail::make_window<double>(cfg);
    const double l = cfg.dynamic_range;
    p.c1 = (cfg.k1 * l) * (cfg.k1 * l);
    p.c2 = (cfg.k2 * l) * (cfg.k2 * l);
    p.b = x.shape()[0];
    p.c = x.shape()[1];
    p.h = x.shape()[2];
    p.w = x.shape()[3];
    if (p.h < cfg.window_size || p.w < cfg.window_size)
        throw ContractError("ssim: spatial size smaller than the window");
    return p;
}

}  // namespace

Tensor ssim_map(const Tensor& x, const Tensor& y, const SsimConfig& cfg) {
    check_pair(x, y);
    const Plan p = make_plan(x, cfg);
    Tensor out({p.b, p.h, p.w});
    const std::int64_t hw = p.h * p.w;
    const std::int64_t chw = p.c * hw;

    parallel_for(0, p.b, [&](std::int64_t bi) {
        detail::ChannelWorkspace<double> ws;
        ws.resize(hw, false);
        std::vector<double> xd(static_cast<std::size_t>(hw));
        std::vector<double> yd(static_cast<std::size_t>(hw));
        std::vector<double> acc(static_cast<std::size_t>(hw), 0.0);
        const float* xp = x.data() + bi * chw;
        const float* yp = y.data() + bi * chw;
        for (std::int64_t ci = 0; ci < p.c; ++ci) {
            for (std::int64_t i = 0; i < hw; ++i) {
                xd[static_cast<std::size_t>(i)] = xp[ci * hw + i];
                yd[static_cast<std::size_t>(i)] = yp[ci * hw + i];
            }
            detail::ssim_channel_accumulate<double>(xd.data(), yd.data(), p.h, p.w, p.win, p.c1,
                                                    p.c2, ws, acc.data());
        }
        float* op = out.data() + bi * hw;
        const double inv_c = 1.0 / static_cast<double>(p.c);
        for (std::int64_t i = 0; i < hw; ++i) {
            // SSIM lies in [-1,1] exactly; round-off can spill over by an ulp.
            double v = acc[static_cast<std::size_t>(i)] * inv_c;
            v = v > 1.0 ? 1.0 : (v < -1.0 ? -1.0 : v);
            op[i] = static_cast<float>(v);
        }
    });
    return out;
}

double mssim(const Tensor& x, const Tensor& y, const SsimConfig& cfg) {
    return mssim_with_grad(x, y, cfg, nullptr, nullptr);
}

namespace {

// Shared worker for both precisions: T is the within-channel arithmetic type;
// channel totals always accumulate in double.
template <typename T>
double mssim_with_grad_impl(const Tensor& x, const Tensor& y, const SsimConfig& cfg, Tensor* dx,
                            Tensor* dy) {
    check_pair(x, y);
    const Plan p = make_plan(x, cfg);
    const auto win = detail::make_window<T>(cfg);
    const T c1 = static_cast<T>(p.c1), c2 = static_cast<T>(p.c2);
    const std::int64_t hw = p.h * p.w;
    const std::int64_t chw = p.c * hw;
    if (dx) *dx = Tensor::full(x.shape(), 0.0f);
    if (dy) *dy = Tensor::full(y.shape(), 0.0f);

    // Every (batch, channel, location) cell carries equal weight in the mean.
    const double scale = 1.0 / (static_cast<double>(p.b) * static_cast<double>(p.c) *
                                static_cast<double>(hw));
    const T scale_t = static_cast<T>(scale);
    std::vector<double> per_batch(static_cast<std::size_t>(p.b), 0.0);

    parallel_for(0, p.b, [&](std::int64_t bi) {
        detail::ChannelWorkspace<T> ws;
        ws.resize(hw, dx != nullptr || dy != nullptr);
        std::vector<T> xd(static_cast<std::size_t>(hw));
        std::vector<T> yd(static_cast<std::size_t>(hw));
        std::vector<T> gxd, gyd;
        if (dx) gxd.assign(static_cast<std::size_t>(hw), 0);
        if (dy) gyd.assign(static_cast<std::size_t>(hw), 0);
        const float* xp = x.data() + bi * chw;
        const float* yp = y.data() + bi * chw;
        double total = 0.0;
        for (std::int64_t ci = 0; ci < p.c; ++ci) {
            for (std::int64_t i = 0; i < hw; ++i) {
                xd[static_cast<std::size_t>(i)] = static_cast<T>(xp[ci * hw + i]);
                yd[static_cast<std::size_t>(i)] = static_cast<T>(yp[ci * hw + i]);
            }
            if (dx || dy) {
                if (dx) std::fill(gxd.begin(), gxd.end(), static_cast<T>(0));
                if (dy) std::fill(gyd.begin(), gyd.end(), static_cast<T>(0));
                total += static_cast<double>(detail::ssim_channel_grad<T>(
                    xd.data(), yd.data(), p.h, p.w, win, c1, c2, static_cast<T>(1), ws,
                    dx ? gxd.data() : nullptr, dy ? gyd.data() : nullptr));
                if (dx) {
                    float* gp = dx->data() + bi * chw + ci * hw;
                    for (std::int64_t i = 0; i < hw; ++i)
                        gp[i] = static_cast<float>(gxd[static_cast<std::size_t>(i)] * scale_t);
                }
                if (dy) {
                    float* gp = dy->data() + bi * chw + ci * hw;
                    for (std::int64_t i = 0; i < hw; ++i)
                        gp[i] = static_cast<float>(gyd[static_cast<std::size_t>(i)] * scale_t);
                }
            } else {
                total += static_cast<double>(detail::ssim_channel_accumulate<T>(
                    xd.data(), yd.data(), p.h, p.w, win, c1, c2, ws, nullptr));
            }
        }
        per_batch[static_cast<std::size_t>(bi)] = total;
    });

    double sum = 0.0;
    for (double v : per_batch) sum += v;  // fixed order regardless of worker count
    return sum * scale;
}

}  // namespace

double mssim_with_grad(const Tensor& x, const Tensor& y, const SsimConfig& cfg, Tensor* dx,
                       Tensor* dy) {
    return mssim_with_grad_impl<double>(x, y, cfg, dx, dy);
}

double mssim_with_grad_f32(const Tensor& x, const Tensor& y, const SsimConfig& cfg, Tensor* dx,
                           Tensor* dy) {
    return mssim_with_grad_impl<float>(x, y, cfg, dx, dy);
}

void RangeCalibrator::observe(const Tensor& t) {
    if (t.numel() == 0) throw ContractError("range calibrator: empty tensor");
    const float* p = t.data();
    double lo = lo_, hi = hi_;
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        const double v = p[i];
        if (v < lo) lo = v;
        if (v > hi) hi = v;
    }
    lo_ = lo;
    hi_ = hi;
    ++count_;
}

double RangeCalibrator::dynamic_range() const {
    if (count_ == 0) throw ContractError("range calibrator: nothing observed");
    return std::max(hi_ - lo_, 1e-3);
}

std::string window_kind_name(WindowKind k) {
    return k == WindowKind::gaussian ? "gaussian" : "uniform";
}

WindowKind window_kind_from_name(const std::string& name) {
    if (name == "gaussian") return WindowKind::gaussian;
    if (name == "uniform") return WindowKind::uniform;
    throw ConfigError("unknown ssim window kind: " + name);
}

}  // namespace fae::ssim
