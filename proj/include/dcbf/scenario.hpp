// SPDX-License-Identifier: Apache-2.0
//
// Cycle-by-cycle experiment runners: receive beamforming with and without an
// interferer, transmit matched-filter beamforming, transmit nulling, and the
// coherence run in which feedback stops at a fixed virtual time.

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dcbf/beamform.hpp"
#include "dcbf/core.hpp"
#include "dcbf/impairments.hpp"
#include "dcbf/metrics.hpp"

namespace dcbf {

enum class Experiment { RX_BF, RX_BF_INTERF, TX_BF, TX_NULL, COHERENCE };

const char* to_string(Experiment e);
Experiment parse_experiment(std::string_view s);

enum class ChannelKind {
  FLAT,          // real gain, zero phase
  RANDOM_PHASE,  // fixed gain, uniform phase
  RAYLEIGH,      // CN(0, gain^2) single tap
  MULTIPATH,     // n_taps of CN with exponentially decaying power, total gain^2
};

const char* to_string(ChannelKind k);
ChannelKind parse_channel_kind(std::string_view s);

/// How one family of links (e.g. source to every node) is drawn.
struct ChannelSpec {
  ChannelKind kind = ChannelKind::RANDOM_PHASE;
  std::size_t n_taps = 1;
  double gain = 1.0;
  /// ToF delay drawn uniformly from [0, max_tof] samples per link.
  std::size_t max_tof = 0;
  /// Per-cycle multiplicative tap perturbation variance (0 = static).
  double walk_var = 0.0;
  /// Explicit per-link taps override the random draw when non-empty.
  std::vector<CVec> taps;
};

inline ChannelSpec rayleigh_links() {
  ChannelSpec c;
  c.kind = ChannelKind::RAYLEIGH;
  return c;
}

struct ScenarioConfig {
  Experiment experiment = Experiment::RX_BF;
  MeshConfig mesh;
  std::size_t n_cycles = 100;

  std::size_t rx_filter_taps = 1;    // T_w
  std::size_t channel_est_taps = 1;  // estimated T_h for transmit experiments
  CovarianceSource cov_source = CovarianceSource::FULL;

  ChannelSpec source_channels;       // source -> nodes (RX) or nodes -> B (TX)
  ChannelSpec interferer_channels;   // interferer -> nodes
  ChannelSpec secondary_channels = rayleigh_links();  // nodes -> C (TX_NULL)

  double noise_power = 0.01;
  double interferer_power = 0.0;

  /// Node CFOs are uniform in +/- this bound. In transmit experiments the mesh
  /// shares one clock (optically synchronised), so a single offset is drawn.
  double cfo_max_hz = 500.0;
  bool shared_mesh_clock = true;
  double phase_walk_var_per_s = 0.0;
  /// When > 0, phase_walk_var_per_s is chosen so the post-halt phase variance
  /// reaches this value at the last cycle.
  double terminal_phi2 = 0.0;
  double ots_jitter_rad = 0.0;

  std::size_t feedback_latency_cycles = 1;
  double feedback_halt_time_s = 2.5;
  /// Receive experiments apply an all-ones beamformer before this time.
  double all_ones_until_s = 0.0;
  /// Transmit experiments use the true channels instead of estimates.
  bool genie_channels = false;
  bool dc_removal = true;

  std::size_t max_lag = 96;
  double coarse_cfo_span_hz = 2000.0;
  double coarse_cfo_step_hz = 50.0;
  double fine_cfo_step_hz = 1.0;
  double detect_threshold = 0.02;

  /// Called with each raw capture of cycle 0 (tag such as "rx_n1" or "rx_B"),
  /// and for receive experiments with the beamformed output ("bf_out"), whose
  /// index 0 is aligned with the leading node's preamble.
  std::function<void(const std::string& tag, const ComplexSignal& capture)> on_capture;
};

/// Throws ConfigError naming the offending field.
void validate(const ScenarioConfig& cfg);

/// Receive-side measurement of one link or of the beamformed output.
struct LinkRecord {
  bool valid = false;
  LinkMetrics m;
  SegmentPowers p;
};

struct CycleRecord {
  std::size_t cycle = 0;
  double t_s = 0.0;
  bool warmup = false;
  bool acq_failed = false;
  bool post_halt = false;
  long bf_source_cycle = -1;

  /// Per-node SISO links at the primary receiver (the node itself for
  /// receive experiments, Rx B's monitor slot for transmit experiments).
  std::vector<LinkRecord> siso;
  LinkRecord bf;
  double snr_gain_db = 0.0;
  double inr_gain_db = 0.0;
  double sinr_gain_db = 0.0;

  /// Secondary receiver (TX_NULL only).
  std::vector<LinkRecord> siso_c;
  LinkRecord bf_c;
  double snr_gain_c_db = 0.0;

  std::vector<std::size_t> lag;
  std::vector<double> detection_stat;
  std::vector<double> cfo_true_hz;
  std::vector<double> cfo_hat_hz;
  bool cfo_at_boundary = false;

  /// Predicted phase-error variance of the applied beamformer and the
  /// corresponding gain bound (transmit power gain, receive gain otherwise).
  double phi2_pred = 0.0;
  double bound_db = 0.0;
};

std::vector<CycleRecord> run_rx_bf(const ScenarioConfig& cfg);
std::vector<CycleRecord> run_tx_bf(const ScenarioConfig& cfg);
std::vector<CycleRecord> run_tx_null(const ScenarioConfig& cfg);
std::vector<CycleRecord> run_coherence(const ScenarioConfig& cfg);
/// Dispatches on cfg.experiment.
std::vector<CycleRecord> run_scenario(const ScenarioConfig& cfg);

/// Phase walk variance actually used by a COHERENCE run.
double effective_walk_var(const ScenarioConfig& cfg);

struct ScenarioSummary {
  std::size_t n_cycles = 0;
  std::size_t n_used = 0;      // non-warmup cycles with a valid beamformed link
  std::size_t n_warmup = 0;
  std::size_t n_acq_failed = 0;
  double mean_snr_gain_db = 0.0;
  double mean_inr_gain_db = 0.0;
  double mean_sinr_gain_db = 0.0;
  double mean_snr_gain_c_db = 0.0;
  double mean_siso_snr_db = 0.0;
  double mean_siso_inr_db = 0.0;
  double mean_bf_inr_db = 0.0;
  double mean_bound_db = 0.0;
  double configured_phi2 = 0.0;
  double power_gain_bound_db = 0.0;
  double rx_gain_bound_db = 0.0;
  double inr_reduction_bound = 0.0;
};

ScenarioSummary summarize(const ScenarioConfig& cfg, const std::vector<CycleRecord>& records);

/// Mean of the per-node SISO values in dB of the valid links.
double siso_mean_db(const std::vector<LinkRecord>& links, double LinkMetrics::*field);

}  // namespace dcbf
