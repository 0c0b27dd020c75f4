#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fae/common.hpp"

namespace fae::ssim {

enum class WindowKind { gaussian, uniform };

struct SsimConfig {
    int window_size = 11;
    WindowKind window = WindowKind::gaussian;
    double sigma = 1.5;  // gaussian window only
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;  // L in C1=(K1*L)^2, C2=(K2*L)^2

    void validate() const {
        if (window_size < 3 || window_size % 2 == 0)
            throw SpecError("ssim: window_size must be odd and >= 3");
        if (k1 <= 0.0 || k2 <= 0.0) throw SpecError("ssim: K1 and K2 must be positive");
        if (dynamic_range <= 0.0) throw SpecError("ssim: dynamic range must be positive");
        if (window == WindowKind::gaussian && sigma <= 0.0)
            throw SpecError("ssim: sigma must be positive");
    }
};

namespace detail {

template <typename T>
std::vector<T> make_window(const SsimConfig& cfg) {
    cfg.validate();
    const int ws = cfg.window_size;
    std::vector<T> w(static_cast<std::size_t>(ws));
    if (cfg.window == WindowKind::uniform) {
        for (auto& v : w) v = static_cast<T>(1.0) / static_cast<T>(ws);
        return w;
    }
    const int r = ws / 2;
    long double sum = 0.0L;
    for (int i = 0; i < ws; ++i) {
        long double d = i - r;
        long double g = std::exp(-(d * d) / (2.0L * cfg.sigma * cfg.sigma));
        w[static_cast<std::size_t>(i)] = static_cast<T>(g);
        sum += g;
    }
    for (auto& v : w) v = static_cast<T>(static_cast<long double>(v) / sum);
    return w;
}

// Separable windowed filter with edge-replicated same padding, one 2-D slice.
// tmp must hold H*W values. Each output element accumulates its taps in
// ascending-k order; the tap loop is hoisted outside the pixel loop so every
// sweep is a contiguous fused multiply-add over a row segment.
template <typename T>
void filter_same(const T* __restrict in, T* __restrict out, T* __restrict tmp, std::int64_t h,
                 std::int64_t w, const std::vector<T>& win) {
    const std::int64_t r = static_cast<std::int64_t>(win.size()) / 2;
    const std::int64_t ws = static_cast<std::int64_t>(win.size());
    const T* wv = win.data();
    // horizontal: tmp[y][x] = sum_k win[k] * in[y][clamp(x + k - r)]
    for (std::int64_t y = 0; y < h; ++y) {
        const T* __restrict row = in + y * w;
        T* __restrict trow = tmp + y * w;
        for (std::int64_t x = 0; x < w; ++x) trow[x] = 0;
        for (std::int64_t k = 0; k < ws; ++k) {
            const T wk = wv[k];
            const std::int64_t d = k - r;
            if (d <= 0) {
                const T edge = wk * row[0];
                for (std::int64_t x = 0; x < -d; ++x) trow[x] += edge;
                for (std::int64_t x = -d; x < w; ++x) trow[x] += wk * row[x + d];
            } else {
                for (std::int64_t x = 0; x < w - d; ++x) trow[x] += wk * row[x + d];
                const T edge = wk * row[w - 1];
                for (std::int64_t x = w - d; x < w; ++x) trow[x] += edge;
            }
        }
    }
    // vertical: out[y][x] = sum_k win[k] * tmp[clamp(y + k - r)][x]
    for (std::int64_t y = 0; y < h; ++y) {
        T* __restrict orow = out + y * w;
        for (std::int64_t x = 0; x < w; ++x) orow[x] = 0;
        for (std::int64_t k = 0; k < ws; ++k) {
            std::int64_t iy = y + k - r;
            iy = iy < 0 ? 0 : (iy >= h ? h - 1 : iy);
            const T wk = wv[k];
            const T* __restrict trow = tmp + iy * w;
            for (std::int64_t x = 0; x < w; ++x) orow[x] += wk * trow[x];
        }
    }
}

// Exact adjoint of filter_same: border taps fold back into the edge pixels
// they were replicated from. Accumulates into out.
template <typename T>
void filter_same_adjoint(const T* __restrict g, T* __restrict out, T* __restrict tmp,
                         std::int64_t h, std::int64_t w, const std::vector<T>& win) {
    const std::int64_t r = static_cast<std::int64_t>(win.size()) / 2;
    const std::int64_t ws = static_cast<std::int64_t>(win.size());
    const T* wv = win.data();
    // adjoint of the vertical pass: tmp[clamp(y + k - r)][x] += win[k] * g[y][x]
    for (std::int64_t i = 0; i < h * w; ++i) tmp[i] = 0;
    for (std::int64_t y = 0; y < h; ++y) {
        const T* __restrict grow = g + y * w;
        for (std::int64_t k = 0; k < ws; ++k) {
            std::int64_t iy = y + k - r;
            iy = iy < 0 ? 0 : (iy >= h ? h - 1 : iy);
            const T wk = wv[k];
            T* __restrict trow = tmp + iy * w;
            for (std::int64_t x = 0; x < w; ++x) trow[x] += wk * grow[x];
        }
    }
    // adjoint of the horizontal pass: out[y][clamp(x + k - r)] += win[k] * tmp[y][x]
    for (std::int64_t y = 0; y < h; ++y) {
        const T* __restrict trow = tmp + y * w;
        T* __restrict orow = out + y * w;
        for (std::int64_t k = 0; k < ws; ++k) {
            const T wk = wv[k];
            const std::int64_t d = k - r;
            if (d <= 0) {
                T edge = 0;
                for (std::int64_t x = 0; x < -d; ++x) edge += trow[x];
                orow[0] += wk * edge;
                for (std::int64_t x = -d; x < w; ++x) orow[x + d] += wk * trow[x];
            } else {
                for (std::int64_t x = 0; x < w - d; ++x) orow[x + d] += wk * trow[x];
                T edge = 0;
                for (std::int64_t x = w - d; x < w; ++x) edge += trow[x];
                orow[w - 1] += wk * edge;
            }
        }
    }
}

template <typename T>
struct ChannelWorkspace {
    std::vector<T> mu_x, mu_y, m_xx, m_yy, m_xy, prod, tmp;
    std::vector<T> g_mu, g_m2, g_mxy;  // backward only

    void resize(std::int64_t hw, bool backward) {
        mu_x.assign(static_cast<std::size_t>(hw), 0);
        mu_y.assign(static_cast<std::size_t>(hw), 0);
        m_xx.assign(static_cast<std::size_t>(hw), 0);
        m_yy.assign(static_cast<std::size_t>(hw), 0);
        m_xy.assign(static_cast<std::size_t>(hw), 0);
        prod.assign(static_cast<std::size_t>(hw), 0);
        tmp.assign(static_cast<std::size_t>(hw), 0);
        if (backward) {
            g_mu.assign(static_cast<std::size_t>(hw), 0);
            g_m2.assign(static_cast<std::size_t>(hw), 0);
            g_mxy.assign(static_cast<std::size_t>(hw), 0);
        }
    }
};

// Windowed moments of one channel pair.
template <typename T>
void channel_moments(const T* x, const T* y, std::int64_t h, std::int64_t w,
                     const std::vector<T>& win, ChannelWorkspace<T>& ws) {
    const std::int64_t hw = h * w;
    filter_same(x, ws.mu_x.data(), ws.tmp.data(), h, w, win);
    filter_same(y, ws.mu_y.data(), ws.tmp.data(), h, w, win);
    for (std::int64_t i = 0; i < hw; ++i) ws.prod[static_cast<std::size_t>(i)] = x[i] * x[i];
    filter_same(ws.prod.data(), ws.m_xx.data(), ws.tmp.data(), h, w, win);
    for (std::int64_t i = 0; i < hw; ++i) ws.prod[static_cast<std::size_t>(i)] = y[i] * y[i];
    filter_same(ws.prod.data(), ws.m_yy.data(), ws.tmp.data(), h, w, win);
    for (std::int64_t i = 0; i < hw; ++i) ws.prod[static_cast<std::size_t>(i)] = x[i] * y[i];
    filter_same(ws.prod.data(), ws.m_xy.data(), ws.tmp.data(), h, w, win);
}

// Per-location SSIM of one channel, accumulated into map (so the caller can
// average over channels). Returns the channel's SSIM sum over locations.
template <typename T>
T ssim_channel_accumulate(const T* x, const T* y, std::int64_t h, std::int64_t w,
                          const std::vector<T>& win, T c1, T c2, ChannelWorkspace<T>& ws,
                          T* map_accum) {
    channel_moments(x, y, h, w, win, ws);
    const std::int64_t hw = h * w;
    T total = 0;
    for (std::int64_t i = 0; i < hw; ++i) {
        const auto u = static_cast<std::size_t>(i);
        const T mx = ws.mu_x[u], my = ws.mu_y[u];
        const T sxx = ws.m_xx[u] - mx * mx;
        const T syy = ws.m_yy[u] - my * my;
        const T sxy = ws.m_xy[u] - mx * my;
        const T a1 = 2 * mx * my + c1;
        const T a2 = 2 * sxy + c2;
        const T b1 = mx * mx + my * my + c1;
        const T b2 = sxx + syy + c2;
        const T s = (a1 * a2) / (b1 * b2);
        if (map_accum) map_accum[i] += s;
        total += s;
    }
    return total;
}

// SSIM sum plus gradients with respect to x and/or y for one channel.
// `scale` is the weight each location's SSIM carries in the scalar objective;
// gradients accumulate into dx/dy (either may be null).
template <typename T>
T ssim_channel_grad(const T* x, const T* y, std::int64_t h, std::int64_t w,
                    const std::vector<T>& win, T c1, T c2, T scale, ChannelWorkspace<T>& ws,
                    T* dx, T* dy) {
    channel_moments(x, y, h, w, win, ws);
    const std::int64_t hw = h * w;
    T total = 0;

    // dy first, x side reuses the same moment maps.
    for (int side = 0; side < 2; ++side) {
        T* grad = side == 0 ? dy : dx;
        if (!grad) continue;
        for (std::int64_t i = 0; i < hw; ++i) {
            const auto u = static_cast<std::size_t>(i);
            const T mx = ws.mu_x[u], my = ws.mu_y[u];
            const T sxx = ws.m_xx[u] - mx * mx;
            const T syy = ws.m_yy[u] - my * my;
            const T sxy = ws.m_xy[u] - mx * my;
            const T a1 = 2 * mx * my + c1;
            const T a2 = 2 * sxy + c2;
            const T b1 = mx * mx + my * my + c1;
            const T b2 = sxx + syy + c2;
            const T d = b1 * b2;
            const T n = a1 * a2;
            const T inv_d = 1 / d;
            if (side == 0) total += n * inv_d;
            const T inv_d2 = inv_d * inv_d;
            // moments of the differentiated side
            const T mo = side == 0 ? my : mx;  // own mean
            const T mt = side == 0 ? mx : my;  // other mean
            // dS/d(mean), dS/d(second moment), dS/d(cross moment)
            const T ds_dmu = (2 * mt * (a2 - a1) * d - n * 2 * mo * (b2 - b1)) * inv_d2;
            const T ds_dm2 = -n * b1 * inv_d2;
            const T ds_dmxy = 2 * a1 * inv_d;
            ws.g_mu[u] = scale * ds_dmu;
            ws.g_m2[u] = scale * ds_dm2;
            ws.g_mxy[u] = scale * ds_dmxy;
        }
        // chain through the three filtered moments
        const T* own = side == 0 ? y : x;
        const T* other = side == 0 ? x : y;
        for (std::int64_t i = 0; i < hw; ++i) ws.prod[static_cast<std::size_t>(i)] = 0;
        filter_same_adjoint(ws.g_mu.data(), ws.prod.data(), ws.tmp.data(), h, w, win);
        for (std::int64_t i = 0; i < hw; ++i) grad[i] += ws.prod[static_cast<std::size_t>(i)];
        for (std::int64_t i = 0; i < hw; ++i) ws.prod[static_cast<std::size_t>(i)] = 0;
        filter_same_adjoint(ws.g_m2.data(), ws.prod.data(), ws.tmp.data(), h, w, win);
        for (std::int64_t i = 0; i < hw; ++i)
            grad[i] += 2 * own[i] * ws.prod[static_cast<std::size_t>(i)];
        for (std::int64_t i = 0; i < hw; ++i) ws.prod[static_cast<std::size_t>(i)] = 0;
        filter_same_adjoint(ws.g_mxy.data(), ws.prod.data(), ws.tmp.data(), h, w, win);
        for (std::int64_t i = 0; i < hw; ++i)
            grad[i] += other[i] * ws.prod[static_cast<std::size_t>(i)];
    }
    if (!dy) {
        // total was not accumulated above; do a plain forward pass
        total = ssim_channel_accumulate(x, y, h, w, win, c1, c2, ws, static_cast<T*>(nullptr));
    }
    return total;
}

}  // namespace detail
}  // namespace fae::ssim
