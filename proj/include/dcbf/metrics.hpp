// SPDX-License-Identifier: Apache-2.0
//
// Segment power measurements, link metrics, and the analytic beamforming
// bounds under Gaussian phase error.

#pragma once

#include <span>
#include <vector>

#include "dcbf/core.hpp"

namespace dcbf {

/// Floor applied to non-positive power ratios.
inline constexpr double kMetricFloorDb = -60.0;

double to_db(double ratio);
double from_db(double db);

/// Power ratio in dB; non-positive or non-finite ratios clamp to kMetricFloorDb.
double clamped_db(double ratio);

/// Mean |x|^2 of a segment of a measured signal. Throws std::out_of_range if
/// the segment does not fit.
double segment_power(const ComplexSignal& x, const Segment& seg);
double segment_power(const ComplexSignal& x, std::size_t offset, std::size_t length);

struct SegmentPowers {
  double signal_interf_noise = 0.0;  // P_{S+I+N}
  double interf_noise = 0.0;         // P_{I+N}
  double noise = 0.0;                // P_N
};

struct LinkMetrics {
  double snr_db = 0.0;
  double inr_db = 0.0;
  double sinr_db = 0.0;
};

/// SNR = (P_SIN - P_IN) / P_N, INR = (P_IN - P_N) / P_N, SINR = (P_SIN - P_IN) / P_IN.
LinkMetrics link_metrics(const SegmentPowers& p);

/// 10 log10(bf / mean(siso)); linear inputs.
double snr_gain_db(double bf_snr_linear, std::span<const double> siso_snr_linear);

/// E[|sum_n e^{i phi_n}|^2] with phi_n ~ N(0, phi2) iid: (N^2 - N) e^{-phi2} + N.
double power_gain_bound(std::size_t n_nodes, double phi2);
double power_gain_bound_db(std::size_t n_nodes, double phi2);

/// Receive-gain counterpart (noise adds incoherently): power gain / N.
double rx_gain_bound_db(std::size_t n_nodes, double phi2);

/// Best achievable INR reduction fraction: ((N - 1) / N)(1 - e^{-phi2}).
double inr_reduction_bound(std::size_t n_nodes, double phi2);

/// Arithmetic mean; NaN for an empty range.
double mean(std::span<const double> v);

}  // namespace dcbf
