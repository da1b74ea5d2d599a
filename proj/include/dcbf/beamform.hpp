// SPDX-License-Identifier: Apache-2.0
//
// Spatiotemporal MMSE receive beamforming, the transmit matched filter,
// and diagonally loaded transmit nulling.

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "dcbf/core.hpp"
#include "dcbf/estimation.hpp"

namespace dcbf {

/// T_w x (T_z + T_w - 1) Toeplitz data-delay matrix of one node:
/// entry (r, c) = z[tau + c - r] when 0 <= c - r < T_z, else 0.
struct DelayMatrix {
  Eigen::MatrixXcd data;
  int node_id = 0;

  Eigen::Index filter_taps() const { return data.rows(); }
  Eigen::Index columns() const { return data.cols(); }
};

DelayMatrix build_delay_matrix(const ComplexSignal& z, std::size_t tau, std::size_t window_len, std::size_t filter_taps,
                               int node_id = 0);

/// Rows of each node's matrix stacked in node order (N T_w rows).
Eigen::MatrixXcd stack_delay_matrices(std::span<const DelayMatrix> per_node);

/// Training row of length T_z + T_w - 1: floor(T_w / 2) leading zeros, the
/// training samples, and the remaining zeros at the end.
Eigen::RowVectorXcd training_row(std::span<const cplx> training, std::size_t filter_taps);

enum class BeamMethod { MMSE_RX, STMF, TX_NULL };

const char* to_string(BeamMethod m);

struct Beamformer {
  BeamMethod method = BeamMethod::MMSE_RX;
  /// One filter per node; TX_NULL filters have a single tap.
  std::vector<CVec> weights;
  double loading = 0.0;
  /// Output delay implied by the construction (centering or causality).
  std::size_t center_delay = 0;
  /// Cycle whose receptions produced this beamformer; -1 when not derived
  /// from any reception (e.g. the all-ones warm-up beamformer).
  long source_cycle = -1;
  /// ||(C + delta I) w - Z s^H|| / ||Z s^H|| achieved by the solver (MMSE only).
  double solve_residual = 0.0;

  std::size_t n_nodes() const { return weights.size(); }
  std::size_t filter_taps() const { return weights.empty() ? 0 : weights.front().size(); }
  bool all_finite() const;
};

/// Unit scalar weight per node.
Beamformer all_ones_beamformer(BeamMethod method, std::size_t n_nodes);

enum class CovarianceSource { FULL, INTERFERENCE_ONLY };

struct MmseOptions {
  CovarianceSource source = CovarianceSource::FULL;
  /// Stacked delay matrix over interference-plus-noise data; required for
  /// INTERFERENCE_ONLY.
  const Eigen::MatrixXcd* interference_only = nullptr;
  /// Explicit loading; when unset, delta = loading_eps * trace(C) / dim(C).
  std::optional<double> loading;
  double loading_eps = 1e-3;
};

/// w = (C + delta I)^{-1} Z s^H solved by Cholesky with iterative refinement.
/// Throws std::runtime_error when C + delta I is not numerically positive definite.
Beamformer mmse_rx_beamformer(const Eigen::MatrixXcd& stacked, const Eigen::RowVectorXcd& training, std::size_t n_nodes,
                              const MmseOptions& opts = {});

/// out[m] = sum_n sum_r conj(w_n[r]) z_n[tau + m + center_delay - r], for
/// m in [0, len(z) - tau). Index 0 is aligned with z at tau.
ComplexSignal apply_rx_beamformer(const Beamformer& bf, std::span<const ComplexSignal> z_all, std::size_t tau);

/// Time-reversed estimate over its norm. Throws on a zero-norm estimate.
CVec stmf_filter(const ChannelEstimate& h_est);

/// Per-node matched filters with a common causality delay of T_h - 1.
Beamformer stmf_beamformer(std::span<const ChannelEstimate> h_est);

/// (w^* * s)[t], length len(s) + T_w - 1.
CVec predistort(std::span<const cplx> filter, std::span<const cplx> s);

/// w = (h_C h_C^H + delta I)^{-1} h_B by the rank-one inverse update,
/// normalised to sum |w_n|^2 = 1. Throws on delta <= 0 or a zero result.
CVec tx_null_beamformer(std::span<const cplx> h_B, std::span<const cplx> h_C, double delta);

/// Largest-magnitude tap, earliest on ties.
cplx dominant_tap(std::span<const cplx> taps);

/// Output noise power of a receive beamformer when node noises are independent
/// with autocorrelations r_n[d] = E[q_n(t) conj(q_n(t - d))], d >= 0. A single
/// entry in autocorr is shared by all nodes.
double output_noise_power(const Beamformer& bf, std::span<const CVec> autocorr);

}  // namespace dcbf
