// SPDX-License-Identifier: Apache-2.0
//
// Acquisition (joint lag / CFO search), fine maximum-likelihood CFO
// estimation, and least-squares tapped-delay-line channel estimation.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "dcbf/core.hpp"

namespace dcbf {

struct AcquisitionResult {
  std::size_t lag = 0;
  double coarse_cfo_hz = 0.0;
  /// |<z window, ref rotated>|^2 / (||z window||^2 ||ref||^2), in [0, 1].
  double detection_stat = 0.0;
  bool detected = false;
};

struct LagRange {
  std::size_t first = 0;
  std::size_t last = 0;  // inclusive
};

/// Uniform grid center +/- half_span in steps of step (endpoints included).
std::vector<double> uniform_grid(double center, double half_span, double step);

inline constexpr double kDefaultDetectThreshold = 0.1;

/// Joint search over lags in range and hypotheses in cfo_grid. A block-summed
/// correlation ranks every (lag, cfo) pair, then the exact statistic is
/// evaluated at the winning lag and its two neighbours, for each lag's best
/// hypothesis and the grid points beside it.
/// detected is false when the best statistic is below threshold.
AcquisitionResult acquire(const ComplexSignal& z, const ComplexSignal& reference, LagRange lags,
                          std::span<const double> cfo_grid, double threshold = kDefaultDetectThreshold);

/// Exact acquisition statistic for one (lag, cfo) hypothesis.
double detection_statistic(const ComplexSignal& z, const ComplexSignal& reference, std::size_t lag, double cfo_hz);

struct CfoEstimate {
  double cfo_hz = 0.0;
  double peak_metric = 0.0;
  /// Peak on the first or last grid point: the search range is likely too small.
  bool at_boundary = false;
};

/// |sum_t z[tau + t] s*[t] exp(-i 2 pi f t / fs)|^2 for one hypothesis.
double ml_cfo_metric(const ComplexSignal& z, const ComplexSignal& s_ref, std::size_t tau, double f_hz);

/// Grid argmax of ml_cfo_metric, refined once by a parabola through the peak
/// and its two neighbours (uniform grids only).
CfoEstimate ml_cfo(const ComplexSignal& z, const ComplexSignal& s_ref, std::size_t tau, std::span<const double> grid);

struct ChannelEstimate {
  CVec taps;
  double residual_power = 0.0;
  std::string label;
};

/// Least-squares h minimising ||y - s_ref * h||^2 over the window
/// y[t] = z[tau + t], t in [0, len(s_ref) + T_h - 1), via the Hermitian
/// Toeplitz normal equations. Requires len(s_ref) >= 4 T_h.
ChannelEstimate estimate_channel(const ComplexSignal& z, const ComplexSignal& s_ref, std::size_t tau,
                                 std::size_t n_taps, std::string label = {});

/// Mean subtraction over the whole signal.
ComplexSignal remove_dc(const ComplexSignal& x);

/// x[t] * exp(-i 2 pi f (t + t0) / fs).
ComplexSignal derotate(const ComplexSignal& x, double f_hz, double t0_samples = 0.0);

}  // namespace dcbf
