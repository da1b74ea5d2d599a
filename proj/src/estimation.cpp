// SPDX-License-Identifier: Apache-2.0

#include "dcbf/estimation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dcbf {

namespace {

constexpr std::size_t kAcqBlock = 32;
constexpr std::size_t kPhasorResync = 1024;

// sum_t p[t] exp(-i 2 pi f t / fs), phasor recurrence resynchronised periodically.
cplx rotated_sum(std::span<const cplx> p, double f_hz, double fs) {
  const double w = -kTwoPi * f_hz / fs;
  const cplx stepv = std::polar(1.0, w);
  cplx acc{};
  for (std::size_t b = 0; b < p.size(); b += kPhasorResync) {
    cplx rot = std::polar(1.0, w * static_cast<double>(b));
    const std::size_t e = std::min(p.size(), b + kPhasorResync);
    for (std::size_t t = b; t < e; ++t) {
      acc += p[t] * rot;
      rot *= stepv;
    }
  }
  return acc;
}

CVec products(const ComplexSignal& z, const ComplexSignal& ref, std::size_t lag) {
  CVec p(ref.size());
  for (std::size_t t = 0; t < ref.size(); ++t) p[t] = z[lag + t] * std::conj(ref[t]);
  return p;
}

double energy(std::span<const cplx> x) {
  double e = 0;
  for (const auto& v : x) e += std::norm(v);
  return e;
}

}  // namespace

std::vector<double> uniform_grid(double center, double half_span, double step) {
  if (!(step > 0) || half_span < 0) throw std::invalid_argument("grid step must be > 0 and span ≥ 0");
  const auto n = static_cast<long>(std::floor(half_span / step + 1e-9));
  std::vector<double> g;
  g.reserve(static_cast<std::size_t>(2 * n + 1));
  for (long k = -n; k <= n; ++k) g.push_back(center + static_cast<double>(k) * step);
  return g;
}

double detection_statistic(const ComplexSignal& z, const ComplexSignal& reference, std::size_t lag, double cfo_hz) {
  if (lag + reference.size() > z.size()) throw std::invalid_argument("acquisition window exceeds signal");
  const CVec p = products(z, reference, lag);
  const double ez = energy(std::span(z.samples).subspan(lag, reference.size()));
  const double er = energy(reference.samples);
  if (ez <= 0 || er <= 0) return 0.0;
  return std::norm(rotated_sum(p, cfo_hz, z.sample_rate_hz)) / (ez * er);
}

AcquisitionResult acquire(const ComplexSignal& z, const ComplexSignal& reference, LagRange lags,
                          std::span<const double> cfo_grid, double threshold) {
  if (reference.size() > z.size()) throw std::invalid_argument("reference longer than signal");
  if (cfo_grid.empty()) throw std::invalid_argument("empty CFO grid");
  for (double f : cfo_grid)
    if (!std::isfinite(f)) throw std::invalid_argument("non-finite CFO hypothesis");
  const std::size_t max_lag = z.size() - reference.size();
  const std::size_t first = std::min(lags.first, max_lag);
  const std::size_t last = std::min(lags.last, max_lag);
  const double fs = z.sample_rate_hz;
  const double er = energy(reference.samples);

  const std::size_t nb = (reference.size() + kAcqBlock - 1) / kAcqBlock;
  // Block-centre rotations per hypothesis.
  std::vector<CVec> block_rot(cfo_grid.size(), CVec(nb));
  for (std::size_t k = 0; k < cfo_grid.size(); ++k)
    for (std::size_t b = 0; b < nb; ++b) {
      const double tc = static_cast<double>(b * kAcqBlock) + 0.5 * static_cast<double>(kAcqBlock - 1);
      block_rot[k][b] = std::polar(1.0, -kTwoPi * cfo_grid[k] * tc / fs);
    }

  double win = energy(std::span(z.samples).subspan(first, reference.size()));
  double best_approx = -1;
  std::size_t best_lag = first;
  CVec blocks(nb);
  // Best block-domain hypothesis per lag, kept for the refinement stage.
  std::vector<std::size_t> best_k(last - first + 1, 0);
  for (std::size_t lag = first; lag <= last; ++lag) {
    if (lag > first) win += std::norm(z[lag + reference.size() - 1]) - std::norm(z[lag - 1]);
    std::fill(blocks.begin(), blocks.end(), cplx{});
    for (std::size_t t = 0; t < reference.size(); ++t) blocks[t / kAcqBlock] += z[lag + t] * std::conj(reference[t]);
    const double denom = std::max(win, 1e-300) * er;
    double lag_best = -1;
    for (std::size_t k = 0; k < cfo_grid.size(); ++k) {
      cplx acc{};
      for (std::size_t b = 0; b < nb; ++b) acc += blocks[b] * block_rot[k][b];
      const double m = std::norm(acc) / denom;
      if (m > lag_best) {
        lag_best = m;
        best_k[lag - first] = k;
      }
    }
    if (lag_best > best_approx) {
      best_approx = lag_best;
      best_lag = lag;
    }
  }

  // Exact statistic at the winning lag and its neighbours, over each lag's
  // block-domain winner and the adjacent hypotheses.
  AcquisitionResult res;
  const std::size_t lo = best_lag > first ? best_lag - 1 : first;
  const std::size_t hi = std::min(last, best_lag + 1);
  for (std::size_t lag = lo; lag <= hi; ++lag) {
    const CVec p = products(z, reference, lag);
    const double ez = energy(std::span(z.samples).subspan(lag, reference.size()));
    if (ez <= 0 || er <= 0) continue;
    const std::size_t kc = best_k[lag - first];
    const std::size_t k0 = kc > 0 ? kc - 1 : 0;
    const std::size_t k1 = std::min(cfo_grid.size() - 1, kc + 1);
    for (std::size_t k = k0; k <= k1; ++k) {
      const double m = std::norm(rotated_sum(p, cfo_grid[k], fs)) / (ez * er);
      if (m > res.detection_stat) {
        res.detection_stat = m;
        res.lag = lag;
        res.coarse_cfo_hz = cfo_grid[k];
      }
    }
  }
  res.detection_stat = std::min(res.detection_stat, 1.0);
  res.detected = res.detection_stat >= threshold;
  return res;
}

double ml_cfo_metric(const ComplexSignal& z, const ComplexSignal& s_ref, std::size_t tau, double f_hz) {
  if (tau + s_ref.size() > z.size()) throw std::invalid_argument("CFO integration window exceeds signal");
  const CVec p = products(z, s_ref, tau);
  return std::norm(rotated_sum(p, f_hz, z.sample_rate_hz));
}

CfoEstimate ml_cfo(const ComplexSignal& z, const ComplexSignal& s_ref, std::size_t tau, std::span<const double> grid) {
  if (grid.empty()) throw std::invalid_argument("empty CFO grid");
  if (tau + s_ref.size() > z.size()) throw std::invalid_argument("CFO integration window exceeds signal");
  const CVec p = products(z, s_ref, tau);
  std::vector<double> m(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) m[k] = std::norm(rotated_sum(p, grid[k], z.sample_rate_hz));
  const auto k = static_cast<std::size_t>(std::max_element(m.begin(), m.end()) - m.begin());
  CfoEstimate est{grid[k], m[k], false};
  if (grid.size() < 3 || k == 0 || k + 1 == grid.size()) {
    est.at_boundary = grid.size() > 1;
    return est;
  }
  const double h1 = grid[k] - grid[k - 1];
  const double h2 = grid[k + 1] - grid[k];
  if (std::abs(h1 - h2) > 1e-9 * std::abs(h1)) return est;
  const double denom = m[k - 1] - 2 * m[k] + m[k + 1];
  if (denom < 0) {
    const double delta = 0.5 * (m[k - 1] - m[k + 1]) / denom;
    est.cfo_hz = grid[k] + std::clamp(delta, -0.5, 0.5) * h1;
  }
  return est;
}

ChannelEstimate estimate_channel(const ComplexSignal& z, const ComplexSignal& s_ref, std::size_t tau,
                                 std::size_t n_taps, std::string label) {
  if (n_taps == 0) throw std::invalid_argument("channel estimate needs at least one tap");
  if (s_ref.size() < 4 * n_taps) throw std::invalid_argument("reference shorter than 4 T_h");
  if (tau >= z.size()) throw std::invalid_argument("estimation window starts past the signal");
  const std::size_t L = s_ref.size();
  const std::size_t ny = std::min(L + n_taps - 1, z.size() - tau);
  const auto& s = s_ref.samples;

  // (A^H A)[j][k] = sum_t conj(s[t-j]) s[t-k], (A^H y)[j] = sum_t conj(s[t-j]) y[t].
  Eigen::MatrixXcd G(static_cast<Eigen::Index>(n_taps), static_cast<Eigen::Index>(n_taps));
  Eigen::VectorXcd b(static_cast<Eigen::Index>(n_taps));
  for (std::size_t j = 0; j < n_taps; ++j) {
    for (std::size_t k = j; k < n_taps; ++k) {
      cplx acc{};
      for (std::size_t t = k; t < ny && t - j < L; ++t)
        if (t - k < L) acc += std::conj(s[t - j]) * s[t - k];
      G(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = acc;
      G(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = std::conj(acc);
    }
    cplx acc{};
    for (std::size_t t = j; t < ny && t - j < L; ++t) acc += std::conj(s[t - j]) * z[tau + t];
    b(static_cast<Eigen::Index>(j)) = acc;
  }
  Eigen::LLT<Eigen::MatrixXcd> llt(G);
  if (llt.info() != Eigen::Success || G.diagonal().real().minCoeff() <= 0)
    throw std::runtime_error("channel estimation normal matrix is singular (degenerate reference)");
  const Eigen::VectorXcd h = llt.solve(b);
  const double rcond = llt.rcond();
  if (!(rcond > 1e-14)) throw std::runtime_error("channel estimation normal matrix is singular (degenerate reference)");

  ChannelEstimate est;
  est.label = std::move(label);
  est.taps.resize(n_taps);
  for (std::size_t k = 0; k < n_taps; ++k) est.taps[k] = h(static_cast<Eigen::Index>(k));
  double res = 0;
  for (std::size_t t = 0; t < ny; ++t) {
    cplx pred{};
    for (std::size_t k = 0; k < n_taps && k <= t; ++k)
      if (t - k < L) pred += est.taps[k] * s[t - k];
    res += std::norm(z[tau + t] - pred);
  }
  est.residual_power = res / static_cast<double>(ny);
  return est;
}

ComplexSignal remove_dc(const ComplexSignal& x) {
  if (x.empty()) return x;
  cplx mean{};
  for (const auto& v : x.samples) mean += v;
  mean /= static_cast<double>(x.size());
  ComplexSignal out = x;
  for (auto& v : out.samples) v -= mean;
  return out;
}

ComplexSignal derotate(const ComplexSignal& x, double f_hz, double t0_samples) {
  ComplexSignal out = x;
  const double w = -kTwoPi * f_hz / x.sample_rate_hz;
  for (std::size_t t = 0; t < x.size(); ++t) out.samples[t] *= std::polar(1.0, w * (static_cast<double>(t) + t0_samples));
  return out;
}

}  // namespace dcbf
