#pragma once

#include <limits>
#include <string>

#include "fae/ssim/ssim_core.hpp"
#include "fae/tensor.hpp"

namespace fae::ssim {

// Per-pixel structural similarity of two [B,C,H,W] tensors, averaged over
// channels: returns [B,H,W]. Values can exceed [0,1] in degenerate cases;
// identical inputs give exactly 1.
Tensor ssim_map(const Tensor& x, const Tensor& y, const SsimConfig& cfg);

// Mean of ssim_map over every batch element and location.
double mssim(const Tensor& x, const Tensor& y, const SsimConfig& cfg);

// MSSIM plus its gradient with respect to x and/or y (either may be null).
// Gradients are of MSSIM itself; the 1-MSSIM training loss negates them.
double mssim_with_grad(const Tensor& x, const Tensor& y, const SsimConfig& cfg, Tensor* dx,
                       Tensor* dy);

// Same quantity computed with single-precision channel arithmetic: a few ulps
// looser than the double path and several times cheaper, intended for inner
// training loops. Channel totals still accumulate in double.
double mssim_with_grad_f32(const Tensor& x, const Tensor& y, const SsimConfig& cfg, Tensor* dx,
                           Tensor* dy);

// Tracks the min/max value seen across batches to fix the dynamic range L.
class RangeCalibrator {
  public:
    void observe(const Tensor& t);
    bool calibrated() const { return count_ > 0; }
    std::int64_t batches_seen() const { return count_; }
    // max - min over everything observed, floored at 1e-3.
    double dynamic_range() const;

  private:
    double lo_ = std::numeric_limits<double>::infinity();
    double hi_ = -std::numeric_limits<double>::infinity();
    std::int64_t count_ = 0;
};

std::string window_kind_name(WindowKind k);
WindowKind window_kind_from_name(const std::string& name);

}  // namespace fae::ssim
