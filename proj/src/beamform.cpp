// SPDX-License-Identifier: Apache-2.0

#include "dcbf/beamform.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dcbf {

DelayMatrix build_delay_matrix(const ComplexSignal& z, std::size_t tau, std::size_t window_len, std::size_t filter_taps,
                               int node_id) {
  if (filter_taps == 0) throw std::invalid_argument("delay matrix needs T_w ≥ 1");
  if (tau + window_len > z.size()) throw std::invalid_argument("delay-matrix window exceeds signal");
  const auto rows = static_cast<Eigen::Index>(filter_taps);
  const auto cols = static_cast<Eigen::Index>(window_len + filter_taps - 1);
  DelayMatrix m{Eigen::MatrixXcd::Zero(rows, cols), node_id};
  for (Eigen::Index r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < window_len; ++k) m.data(r, r + static_cast<Eigen::Index>(k)) = z[tau + k];
  return m;
}

Eigen::MatrixXcd stack_delay_matrices(std::span<const DelayMatrix> per_node) {
  if (per_node.empty()) throw std::invalid_argument("no delay matrices to stack");
  const Eigen::Index cols = per_node.front().columns();
  Eigen::Index rows = 0;
  for (const auto& m : per_node) {
    if (m.columns() != cols) throw std::invalid_argument("delay matrices have inconsistent widths");
    rows += m.filter_taps();
  }
  Eigen::MatrixXcd out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& m : per_node) {
    out.middleRows(at, m.filter_taps()) = m.data;
    at += m.filter_taps();
  }
  return out;
}

Eigen::RowVectorXcd training_row(std::span<const cplx> training, std::size_t filter_taps) {
  const std::size_t lead = filter_taps / 2;
  Eigen::RowVectorXcd s = Eigen::RowVectorXcd::Zero(static_cast<Eigen::Index>(training.size() + filter_taps - 1));
  for (std::size_t k = 0; k < training.size(); ++k) s(static_cast<Eigen::Index>(lead + k)) = training[k];
  return s;
}

const char* to_string(BeamMethod m) {
  switch (m) {
    case BeamMethod::MMSE_RX: return "MMSE_RX";
    case BeamMethod::STMF: return "STMF";
    case BeamMethod::TX_NULL: return "TX_NULL";
  }
  return "?";
}

bool Beamformer::all_finite() const {
  for (const auto& w : weights)
    for (const auto& v : w)
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

Beamformer all_ones_beamformer(BeamMethod method, std::size_t n_nodes) {
  Beamformer bf;
  bf.method = method;
  bf.weights.assign(n_nodes, CVec{cplx{1.0, 0.0}});
  return bf;
}

Beamformer mmse_rx_beamformer(const Eigen::MatrixXcd& stacked, const Eigen::RowVectorXcd& training, std::size_t n_nodes,
                              const MmseOptions& opts) {
  if (n_nodes == 0 || stacked.rows() % static_cast<Eigen::Index>(n_nodes) != 0)
    throw std::invalid_argument("stacked rows not divisible by node count");
  if (stacked.cols() != training.size()) throw std::invalid_argument("training row width does not match delay matrix");
  const Eigen::Index dim = stacked.rows();
  const std::size_t taps = static_cast<std::size_t>(dim) / n_nodes;

  Eigen::MatrixXcd C;
  if (opts.source == CovarianceSource::FULL) {
    C = stacked * stacked.adjoint();
  } else {
    if (!opts.interference_only) throw std::invalid_argument("INTERFERENCE_ONLY covariance requires look-through data");
    if (opts.interference_only->rows() != dim) throw std::invalid_argument("look-through matrix has wrong row count");
    C = (*opts.interference_only) * opts.interference_only->adjoint();
  }
  const double delta = opts.loading ? *opts.loading : opts.loading_eps * C.trace().real() / static_cast<double>(dim);
  if (delta < 0) throw std::invalid_argument("diagonal loading must be ≥ 0");
  C.diagonal().array() += delta;

  const Eigen::VectorXcd rhs = stacked * training.adjoint();
  Eigen::LLT<Eigen::MatrixXcd> llt(C);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-15))
    throw std::runtime_error("covariance plus loading is numerically singular; use diagonal loading δ > 0");
  Eigen::VectorXcd w = llt.solve(rhs);
  const double rhs_norm = std::max(rhs.norm(), 1e-300);
  double resid = (C * w - rhs).norm() / rhs_norm;
  for (int it = 0; it < 3 && resid > 1e-12; ++it) {
    w += llt.solve(rhs - C * w);
    resid = (C * w - rhs).norm() / rhs_norm;
  }

  Beamformer bf;
  bf.method = BeamMethod::MMSE_RX;
  bf.loading = delta;
  bf.center_delay = taps / 2;
  bf.solve_residual = resid;
  bf.weights.resize(n_nodes, CVec(taps));
  for (std::size_t n = 0; n < n_nodes; ++n)
    for (std::size_t r = 0; r < taps; ++r) bf.weights[n][r] = w(static_cast<Eigen::Index>(n * taps + r));
  if (!bf.all_finite()) throw std::runtime_error("MMSE beamformer produced non-finite weights");
  return bf;
}

ComplexSignal apply_rx_beamformer(const Beamformer& bf, std::span<const ComplexSignal> z_all, std::size_t tau) {
  if (bf.n_nodes() != z_all.size()) throw std::invalid_argument("beamformer node count does not match receptions");
  std::size_t n_out = 0;
  double fs = 2e6;
  for (const auto& z : z_all) {
    n_out = std::max(n_out, z.size() > tau ? z.size() - tau : 0);
    fs = z.sample_rate_hz;
  }
  CVec out(n_out, cplx{});
  const long c0 = static_cast<long>(bf.center_delay);
  for (std::size_t n = 0; n < z_all.size(); ++n) {
    const auto& z = z_all[n].samples;
    const auto& w = bf.weights[n];
    for (std::size_t r = 0; r < w.size(); ++r) {
      const cplx wc = std::conj(w[r]);
      const long shift = static_cast<long>(tau) + c0 - static_cast<long>(r);
      for (std::size_t m = 0; m < n_out; ++m) {
        const long idx = static_cast<long>(m) + shift;
        if (idx >= 0 && idx < static_cast<long>(z.size())) out[m] += wc * z[static_cast<std::size_t>(idx)];
      }
    }
  }
  return {std::move(out), fs};
}

CVec stmf_filter(const ChannelEstimate& h_est) {
  double e = 0;
  for (const auto& v : h_est.taps) e += std::norm(v);
  if (!(e > 0)) throw std::invalid_argument("matched filter from zero-norm channel estimate");
  const double nrm = std::sqrt(e);
  CVec w(h_est.taps.rbegin(), h_est.taps.rend());
  for (auto& v : w) v /= nrm;
  return w;
}

Beamformer stmf_beamformer(std::span<const ChannelEstimate> h_est) {
  Beamformer bf;
  bf.method = BeamMethod::STMF;
  std::size_t th = 0;
  for (const auto& h : h_est) {
    bf.weights.push_back(stmf_filter(h));
    th = std::max(th, h.taps.size());
  }
  bf.center_delay = th > 0 ? th - 1 : 0;
  return bf;
}

CVec predistort(std::span<const cplx> filter, std::span<const cplx> s) {
  if (filter.empty() || s.empty()) return {};
  CVec out(s.size() + filter.size() - 1, cplx{});
  for (std::size_t k = 0; k < filter.size(); ++k) {
    const cplx wc = std::conj(filter[k]);
    for (std::size_t t = 0; t < s.size(); ++t) out[t + k] += wc * s[t];
  }
  return out;
}

CVec tx_null_beamformer(std::span<const cplx> h_B, std::span<const cplx> h_C, double delta) {
  if (!(delta > 0)) throw std::invalid_argument("transmit nulling requires diagonal loading δ > 0");
  if (h_B.size() != h_C.size() || h_B.empty()) throw std::invalid_argument("channel vectors must be equal, nonzero length");
  cplx c_dot_b{};
  double c_energy = 0;
  for (std::size_t n = 0; n < h_B.size(); ++n) {
    c_dot_b += std::conj(h_C[n]) * h_B[n];
    c_energy += std::norm(h_C[n]);
  }
  const cplx coef = c_dot_b / (delta + c_energy);
  CVec w(h_B.size());
  double p = 0;
  for (std::size_t n = 0; n < h_B.size(); ++n) {
    w[n] = (h_B[n] - h_C[n] * coef) / delta;
    p += std::norm(w[n]);
  }
  if (!(p > 0) || !std::isfinite(p)) throw std::runtime_error("transmit nulling weights vanish");
  const double s = 1.0 / std::sqrt(p);
  for (auto& v : w) v *= s;
  return w;
}

cplx dominant_tap(std::span<const cplx> taps) {
  if (taps.empty()) throw std::invalid_argument("no taps");
  std::size_t best = 0;
  for (std::size_t k = 1; k < taps.size(); ++k)
    if (std::abs(taps[k]) > std::abs(taps[best])) best = k;
  return taps[best];
}

double output_noise_power(const Beamformer& bf, std::span<const CVec> autocorr) {
  if (autocorr.empty() || (autocorr.size() != 1 && autocorr.size() != bf.n_nodes()))
    throw std::invalid_argument("need one shared or one per-node noise autocorrelation");
  double p = 0;
  for (std::size_t n = 0; n < bf.n_nodes(); ++n) {
    const CVec& ac = autocorr.size() == 1 ? autocorr[0] : autocorr[n];
    auto r = [&](long d) -> cplx {
      const auto a = static_cast<std::size_t>(d < 0 ? -d : d);
      if (a >= ac.size()) return {};
      return d >= 0 ? ac[a] : std::conj(ac[a]);
    };
    const CVec& w = bf.weights[n];
    for (std::size_t j = 0; j < w.size(); ++j)
      for (std::size_t k = 0; k < w.size(); ++k)
        p += (std::conj(w[j]) * w[k] * r(static_cast<long>(k) - static_cast<long>(j))).real();
  }
  return p;
}

}  // namespace dcbf
