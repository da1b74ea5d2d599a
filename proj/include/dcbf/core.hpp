// SPDX-License-Identifier: Apache-2.0
//
// Shared domain types for the distributed coherent beamforming simulator.

#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dcbf {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Raised for invalid user-facing configuration. The message names the field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Complex baseband samples at a fixed sample rate.
struct ComplexSignal {
  CVec samples;
  double sample_rate_hz = 2e6;

  ComplexSignal() = default;
  ComplexSignal(CVec s, double fs) : samples(std::move(s)), sample_rate_hz(fs) {}

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  cplx& operator[](std::size_t i) { return samples[i]; }
  const cplx& operator[](std::size_t i) const { return samples[i]; }

  /// Mean power (1/len) sum |s|^2; zero for an empty signal.
  double power() const;
  bool all_finite() const;
  /// Copy of samples [offset, offset+length), zero-filled past the end.
  ComplexSignal slice(std::size_t offset, std::size_t length) const;
};

double mean_power(std::span<const cplx> x);

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
  std::size_t end() const { return offset + length; }
};

/// Ordered, non-overlapping segments inside a frame of total_length samples.
struct FrameLayout {
  std::vector<Segment> segments;
  std::size_t total_length = 0;

  /// Appends a segment directly after the last one.
  void append(std::string name, std::size_t length);
  const Segment& at(std::string_view name) const;
  const Segment* find(std::string_view name) const;
  /// Throws std::logic_error when segments overlap, are unsorted, or overflow.
  void check() const;
  std::size_t used_length() const;
};

/// Mesh-wide system parameters. Defaults follow the experimental system.
struct MeshConfig {
  int n_nodes = 3;
  double sample_rate_hz = 2e6;
  double bandwidth_hz = 1e6;
  double carrier_hz = 60.484e9;
  double cycle_period_s = 0.2;
  std::size_t amble_len = 8192;
  std::size_t payload_len = 8192;
  std::size_t est_integration_len = 2048;
  std::size_t guard_len = 256;
  std::size_t rx_frame_len = 75560;
  std::size_t tx_frame_len = 91472;
  double diag_loading_eps = 1e-3;
  std::uint64_t seed = 1;
};

/// Returns cfg unchanged, or throws ConfigError naming the offending field.
MeshConfig validate_config(const MeshConfig& cfg);

// ---------------------------------------------------------------------------
// Deterministic random streams
//
// A substream seed is derived as
//   splitmix64(splitmix64(splitmix64(seed) ^ node_id) ^ fnv1a64(purpose))
// so each (node, purpose) pair gets its own stream independent of construction
// order. Gaussian draws use Box-Muller on 53-bit uniforms from mt19937_64,
// which keeps test vectors identical across standard library implementations.

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t node_id, std::string_view purpose);

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  Rng(std::uint64_t master, std::uint64_t node_id, std::string_view purpose)
      : engine_(derive_seed(master, node_id, purpose)) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal.
  double normal();
  /// Circularly symmetric complex Gaussian with E|z|^2 = power.
  cplx complex_normal(double power);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  int bit() { return static_cast<int>(engine_() >> 63); }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

/// One mesh node's clock: residual CFO, carrier phase, and timestamp offset.
struct NodeState {
  int node_id = 0;
  double cfo_hz = 0.0;
  /// Unwrapped carrier phase, radians.
  double phase_rad = 0.0;
  double phase_walk_var_per_s = 0.0;
  /// Per-cycle residual phase jitter (not accumulated), radians.
  double cycle_jitter_rad = 0.0;
  double timestamp_offset_s = 0.0;
  Rng rng;

  NodeState() = default;
  NodeState(int id, std::uint64_t master_seed, std::string_view purpose = "clock")
      : node_id(id), rng(master_seed, static_cast<std::uint64_t>(id), purpose) {}

  double wrapped_phase() const;
};

}  // namespace dcbf
