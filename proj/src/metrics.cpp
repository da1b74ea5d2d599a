// SPDX-License-Identifier: Apache-2.0

#include "dcbf/metrics.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace dcbf {

double to_db(double ratio) { return 10.0 * std::log10(ratio); }
double from_db(double db) { return std::pow(10.0, db / 10.0); }

double clamped_db(double ratio) {
  if (!(ratio > 0) || !std::isfinite(ratio)) return kMetricFloorDb;
  return std::max(to_db(ratio), kMetricFloorDb);
}

double segment_power(const ComplexSignal& x, std::size_t offset, std::size_t length) {
  if (length == 0) throw std::out_of_range("empty measurement segment");
  if (offset + length > x.size()) throw std::out_of_range("measurement segment exceeds signal");
  return mean_power(std::span(x.samples).subspan(offset, length));
}

double segment_power(const ComplexSignal& x, const Segment& seg) { return segment_power(x, seg.offset, seg.length); }

LinkMetrics link_metrics(const SegmentPowers& p) {
  if (!(p.noise > 0)) throw std::invalid_argument("link metrics need a positive noise power");
  LinkMetrics m;
  const double s = p.signal_interf_noise - p.interf_noise;
  const double i = p.interf_noise - p.noise;
  m.snr_db = clamped_db(s / p.noise);
  m.inr_db = clamped_db(i / p.noise);
  m.sinr_db = clamped_db(s / p.interf_noise);
  return m;
}

double mean(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double snr_gain_db(double bf_snr_linear, std::span<const double> siso_snr_linear) {
  const double ref = mean(siso_snr_linear);
  if (!(ref > 0)) return std::numeric_limits<double>::quiet_NaN();
  return clamped_db(bf_snr_linear / ref);
}

double power_gain_bound(std::size_t n_nodes, double phi2) {
  if (phi2 < 0) throw std::invalid_argument("phase-error variance must be ≥ 0");
  const double n = static_cast<double>(n_nodes);
  return (n * n - n) * std::exp(-phi2) + n;
}

double power_gain_bound_db(std::size_t n_nodes, double phi2) { return to_db(power_gain_bound(n_nodes, phi2)); }

double rx_gain_bound_db(std::size_t n_nodes, double phi2) {
  return to_db(power_gain_bound(n_nodes, phi2) / static_cast<double>(n_nodes));
}

double inr_reduction_bound(std::size_t n_nodes, double phi2) {
  if (phi2 < 0) throw std::invalid_argument("phase-error variance must be ≥ 0");
  if (n_nodes == 0) return 0.0;
  const double n = static_cast<double>(n_nodes);
  return (n - 1) / n * (1 - std::exp(-phi2));
}

}  // namespace dcbf
