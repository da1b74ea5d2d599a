// SPDX-License-Identifier: Apache-2.0
//
// Per-link channels, per-node clock / LO effects, and additive noise.

#pragma once

#include <string>

#include "dcbf/core.hpp"

namespace dcbf {

/// Tapped delay line h[0..T_h-1] preceded by an integer time-of-flight delay.
struct ChannelModel {
  CVec taps{cplx{1.0, 0.0}};
  std::size_t tof_delay = 0;
  std::string label;

  /// Throws std::invalid_argument when taps are empty or all zero.
  void check() const;
  std::size_t response_length() const { return taps.size(); }
};

struct NoiseSpec {
  double noise_power_per_sample = 0.0;
};

/// (h * x) delayed by tof_delay; length len(x) + T_h - 1 + tof_delay.
ComplexSignal apply_channel(const ComplexSignal& x, const ChannelModel& ch);

/// Advances the carrier phase by 2 pi cfo dt plus a Wiener increment of
/// variance phase_walk_var_per_s * dt drawn from the node's own stream.
void advance_clock(NodeState& node, double dt_s);

/// Phase increments of the random walk are drawn once per this many samples
/// when a node's LO is applied across a signal.
inline constexpr std::size_t kPhaseWalkBlock = 64;

/// x[t] * exp(i (phase(t) + cycle_jitter)), where phase(t) starts at the
/// node's current phase and evolves across the signal as advance_clock does.
/// The node is advanced by len(x) / fs.
ComplexSignal apply_node_imperfections(const ComplexSignal& x, NodeState& node);

/// x + n, n i.i.d. CN(0, P_N).
ComplexSignal add_noise(const ComplexSignal& x, const NoiseSpec& spec, Rng& rng);

/// Per-cycle multiplicative perturbation taps *= (1 + CN(0, var)).
void perturb_channel(ChannelModel& ch, double var, Rng& rng);

/// Sum of signals aligned at index 0; the result has the longest length.
ComplexSignal superpose(std::span<const ComplexSignal> parts);

}  // namespace dcbf
