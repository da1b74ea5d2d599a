// SPDX-License-Identifier: Apache-2.0

#include "dcbf/impairments.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dcbf {

void ChannelModel::check() const {
  if (taps.empty()) throw std::invalid_argument("channel '" + label + "' has no taps");
  if (std::none_of(taps.begin(), taps.end(), [](const cplx& v) { return v != cplx{}; }))
    throw std::invalid_argument("channel '" + label + "' has all-zero taps");
}

ComplexSignal apply_channel(const ComplexSignal& x, const ChannelModel& ch) {
  ch.check();
  const std::size_t th = ch.taps.size();
  if (x.empty()) return {CVec(th - 1 + ch.tof_delay, cplx{}), x.sample_rate_hz};
  CVec out(x.size() + th - 1 + ch.tof_delay, cplx{});
  for (std::size_t k = 0; k < th; ++k) {
    const cplx h = ch.taps[k];
    if (h == cplx{}) continue;
    cplx* dst = out.data() + ch.tof_delay + k;
    for (std::size_t t = 0; t < x.size(); ++t) dst[t] += h * x.samples[t];
  }
  return {std::move(out), x.sample_rate_hz};
}

void advance_clock(NodeState& node, double dt_s) {
  if (dt_s < 0) throw std::invalid_argument("advance_clock: dt_s must be ≥ 0");
  node.phase_rad += kTwoPi * node.cfo_hz * dt_s;
  if (node.phase_walk_var_per_s > 0 && dt_s > 0)
    node.phase_rad += std::sqrt(node.phase_walk_var_per_s * dt_s) * node.rng.normal();
}

ComplexSignal apply_node_imperfections(const ComplexSignal& x, NodeState& node) {
  const double fs = x.sample_rate_hz;
  CVec out(x.size());
  const bool walking = node.phase_walk_var_per_s > 0;
  const double start = node.phase_rad;
  // Deterministic CFO ramp is computed per sample from the block start so
  // accumulated rounding stays at one multiply per sample.
  double walk = 0.0;
  for (std::size_t b = 0; b < x.size(); b += kPhaseWalkBlock) {
    const std::size_t e = std::min(x.size(), b + kPhaseWalkBlock);
    for (std::size_t t = b; t < e; ++t) {
      const double ph = start + walk + kTwoPi * node.cfo_hz * static_cast<double>(t) / fs + node.cycle_jitter_rad;
      out[t] = x.samples[t] * std::polar(1.0, ph);
    }
    if (walking) walk += std::sqrt(node.phase_walk_var_per_s * static_cast<double>(e - b) / fs) * node.rng.normal();
  }
  node.phase_rad = start + walk + kTwoPi * node.cfo_hz * static_cast<double>(x.size()) / fs;
  return {std::move(out), fs};
}

ComplexSignal add_noise(const ComplexSignal& x, const NoiseSpec& spec, Rng& rng) {
  if (spec.noise_power_per_sample < 0) throw std::invalid_argument("noise power must be ≥ 0");
  ComplexSignal out = x;
  if (spec.noise_power_per_sample == 0) return out;
  for (auto& v : out.samples) v += rng.complex_normal(spec.noise_power_per_sample);
  return out;
}

void perturb_channel(ChannelModel& ch, double var, Rng& rng) {
  if (var <= 0) return;
  for (auto& h : ch.taps) h *= (1.0 + rng.complex_normal(var));
}

ComplexSignal superpose(std::span<const ComplexSignal> parts) {
  std::size_t n = 0;
  double fs = 2e6;
  for (const auto& p : parts) {
    n = std::max(n, p.size());
    fs = p.sample_rate_hz;
  }
  CVec out(n, cplx{});
  for (const auto& p : parts)
    for (std::size_t t = 0; t < p.size(); ++t) out[t] += p.samples[t];
  return {std::move(out), fs};
}

}  // namespace dcbf
