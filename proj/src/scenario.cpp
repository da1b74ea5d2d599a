// SPDX-License-Identifier: Apache-2.0

#include "dcbf/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

#include "dcbf/estimation.hpp"
#include "dcbf/waveform.hpp"

namespace dcbf {

namespace {

constexpr std::size_t kCaptureMargin = 64;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string node_name(std::size_t n) { return "n" + std::to_string(n + 1); }

ChannelModel draw_channel(const ChannelSpec& spec, std::size_t idx, Rng& rng, std::string label) {
  ChannelModel c;
  c.label = std::move(label);
  if (!spec.taps.empty()) {
    if (idx >= spec.taps.size()) throw ConfigError("channels.taps: fewer explicit channels than links");
    c.taps = spec.taps[idx];
  } else {
    switch (spec.kind) {
      case ChannelKind::FLAT:
        c.taps = {cplx{spec.gain, 0.0}};
        break;
      case ChannelKind::RANDOM_PHASE:
        c.taps = {std::polar(spec.gain, rng.uniform(-kPi, kPi))};
        break;
      case ChannelKind::RAYLEIGH:
        c.taps = {rng.complex_normal(spec.gain * spec.gain)};
        break;
      case ChannelKind::MULTIPATH: {
        const std::size_t T = std::max<std::size_t>(spec.n_taps, 1);
        std::vector<double> prof(T);
        double tot = 0;
        for (std::size_t k = 0; k < T; ++k) tot += prof[k] = std::exp(-static_cast<double>(k) / 1.5);
        c.taps.resize(T);
        for (std::size_t k = 0; k < T; ++k) c.taps[k] = rng.complex_normal(spec.gain * spec.gain * prof[k] / tot);
        break;
      }
    }
  }
  c.tof_delay = spec.max_tof > 0 ? static_cast<std::size_t>(rng.below(spec.max_tof + 1)) : 0;
  c.check();
  return c;
}

std::size_t max_response(const ChannelSpec& spec) {
  std::size_t t = std::max<std::size_t>(spec.n_taps, 1);
  for (const auto& h : spec.taps) t = std::max(t, h.size());
  return t + spec.max_tof;
}

ComplexSignal fit(ComplexSignal x, std::size_t len) {
  x.samples.resize(len, cplx{});
  return x;
}

void accumulate(ComplexSignal& acc, const ComplexSignal& x) {
  for (std::size_t t = 0; t < acc.size() && t < x.size(); ++t) acc[t] += x[t];
}

/// Autocorrelation of white noise of power pn after the matched filter and a
/// derotation at cfo_hz, lags 0..max_d-1.
CVec noise_autocorr(double pn, std::size_t max_d, double cfo_hz, double fs) {
  const std::vector<double> g = rrc_taps();
  CVec r(std::max<std::size_t>(max_d, 1));
  for (std::size_t d = 0; d < r.size(); ++d) {
    double acc = 0;
    for (std::size_t k = d; k < g.size(); ++k) acc += g[k] * g[k - d];
    r[d] = pn * acc * std::polar(1.0, -kTwoPi * cfo_hz * static_cast<double>(d) / fs);
  }
  return r;
}

ComplexSignal front_end(ComplexSignal r, const ScenarioConfig& cfg) {
  if (cfg.dc_removal) r = remove_dc(r);
  return matched_filter(r);
}

LinkRecord make_link(const SegmentPowers& p) {
  LinkRecord l;
  l.valid = true;
  l.p = p;
  l.m = link_metrics(p);
  return l;
}

void fill_gains(CycleRecord& r) {
  if (!r.bf.valid) {
    r.snr_gain_db = r.inr_gain_db = r.sinr_gain_db = kNaN;
  } else {
    r.snr_gain_db = r.bf.m.snr_db - siso_mean_db(r.siso, &LinkMetrics::snr_db);
    r.inr_gain_db = r.bf.m.inr_db - siso_mean_db(r.siso, &LinkMetrics::inr_db);
    r.sinr_gain_db = r.bf.m.sinr_db - siso_mean_db(r.siso, &LinkMetrics::sinr_db);
  }
  r.snr_gain_c_db = r.bf_c.valid ? r.bf_c.m.snr_db - siso_mean_db(r.siso_c, &LinkMetrics::snr_db) : kNaN;
}

struct Acquired {
  bool ok = false;
  std::size_t lag = 0;
  double stat = 0.0;
  double cfo = 0.0;
  bool at_boundary = false;
};

// Coarse joint search on the preamble, then ML refinement on the window at
// lag + fine_offset around the coarse hypothesis.
Acquired acquire_refine(const ComplexSignal& z, const ComplexSignal& ref, std::size_t fine_offset,
                        std::span<const double> coarse_grid, const ScenarioConfig& cfg) {
  Acquired a;
  const AcquisitionResult acq = acquire(z, ref, {0, cfg.max_lag}, coarse_grid, cfg.detect_threshold);
  a.lag = acq.lag;
  a.stat = acq.detection_stat;
  if (!acq.detected) return a;
  a.ok = true;
  const auto fine = uniform_grid(acq.coarse_cfo_hz, cfg.coarse_cfo_step_hz, cfg.fine_cfo_step_hz);
  if (acq.lag + fine_offset + ref.size() <= z.size()) {
    const CfoEstimate est = ml_cfo(z, ref, acq.lag + fine_offset, fine);
    a.cfo = est.cfo_hz;
    a.at_boundary = est.at_boundary;
  } else {
    a.cfo = acq.coarse_cfo_hz;
  }
  return a;
}

void init_clocks(std::vector<NodeState>& nodes, const ScenarioConfig& cfg, bool shared, double walk_var) {
  Rng cfo_rng(cfg.mesh.seed, 0, "cfo");
  const double common = cfo_rng.uniform(-cfg.cfo_max_hz, cfg.cfo_max_hz);
  Rng phase_rng(cfg.mesh.seed, 0, "initial-phase");
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    nodes[n] = NodeState(static_cast<int>(n + 1), cfg.mesh.seed, "clock");
    nodes[n].cfo_hz = shared ? common : cfo_rng.uniform(-cfg.cfo_max_hz, cfg.cfo_max_hz);
    nodes[n].phase_rad = phase_rng.uniform(-kPi, kPi);
    nodes[n].phase_walk_var_per_s = walk_var;
  }
}

void draw_jitter(std::vector<NodeState>& nodes, double sigma, Rng& rng) {
  for (auto& nd : nodes) nd.cycle_jitter_rad = sigma > 0 ? sigma * rng.normal() : 0.0;
}

ComplexSignal frame_reference(const MeshConfig& mesh, FrameKind kind, int node_id) {
  const Frame f = build_frame({kind, node_id, 1, 0}, mesh);
  return matched_filter(ComplexSignal(segment_samples(f, "preamble"), mesh.sample_rate_hz));
}

}  // namespace

const char* to_string(Experiment e) {
  switch (e) {
    case Experiment::RX_BF: return "RX_BF";
    case Experiment::RX_BF_INTERF: return "RX_BF_INTERF";
    case Experiment::TX_BF: return "TX_BF";
    case Experiment::TX_NULL: return "TX_NULL";
    case Experiment::COHERENCE: return "COHERENCE";
  }
  return "?";
}

Experiment parse_experiment(std::string_view s) {
  for (auto e : {Experiment::RX_BF, Experiment::RX_BF_INTERF, Experiment::TX_BF, Experiment::TX_NULL,
                 Experiment::COHERENCE})
    if (s == to_string(e)) return e;
  throw ConfigError("experiment: unknown value '" + std::string(s) + "'");
}

const char* to_string(ChannelKind k) {
  switch (k) {
    case ChannelKind::FLAT: return "flat";
    case ChannelKind::RANDOM_PHASE: return "random_phase";
    case ChannelKind::RAYLEIGH: return "rayleigh";
    case ChannelKind::MULTIPATH: return "multipath";
  }
  return "?";
}

ChannelKind parse_channel_kind(std::string_view s) {
  for (auto k : {ChannelKind::FLAT, ChannelKind::RANDOM_PHASE, ChannelKind::RAYLEIGH, ChannelKind::MULTIPATH})
    if (s == to_string(k)) return k;
  throw ConfigError("channel kind: unknown value '" + std::string(s) + "'");
}

void validate(const ScenarioConfig& cfg) {
  validate_config(cfg.mesh);
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(cfg.n_cycles >= 1, "n_cycles must be ≥ 1");
  require(cfg.rx_filter_taps >= 1, "rx_filter_taps must be ≥ 1");
  require(cfg.rx_filter_taps <= cfg.mesh.guard_len, "rx_filter_taps must not exceed guard_len");
  require(cfg.channel_est_taps >= 1, "channel_est_taps must be ≥ 1");
  require(cfg.noise_power >= 0, "noise_power must be ≥ 0");
  require(cfg.interferer_power >= 0, "interferer_power must be ≥ 0");
  require(cfg.cfo_max_hz >= 0, "cfo_max_hz must be ≥ 0");
  require(cfg.phase_walk_var_per_s >= 0, "phase_walk_var_per_s must be ≥ 0");
  require(cfg.terminal_phi2 >= 0, "terminal_phi2 must be ≥ 0");
  require(cfg.ots_jitter_rad >= 0, "ots_jitter_rad must be ≥ 0");
  require(cfg.feedback_halt_time_s >= 0, "feedback_halt_time_s must be ≥ 0");
  require(cfg.coarse_cfo_step_hz > 0, "coarse_cfo_step_hz must be > 0");
  require(cfg.fine_cfo_step_hz > 0, "fine_cfo_step_hz must be > 0");
  require(cfg.coarse_cfo_span_hz >= 0, "coarse_cfo_span_hz must be ≥ 0");
  require(cfg.mesh.est_integration_len + cfg.rx_filter_taps <
              frame_layout(FrameKind::RX_BF_SOURCE, cfg.mesh).at("lookthrough").length,
          "est_integration_len must be shorter than the look-through segment");
  for (const ChannelSpec* c : {&cfg.source_channels, &cfg.interferer_channels, &cfg.secondary_channels}) {
    require(c->gain >= 0, "channel gain must be ≥ 0");
    require(c->walk_var >= 0, "channel walk_var must be ≥ 0");
    require(c->n_taps >= 1, "channel n_taps must be ≥ 1");
  }
  const bool tx = cfg.experiment == Experiment::TX_BF || cfg.experiment == Experiment::TX_NULL ||
                  cfg.experiment == Experiment::COHERENCE;
  const double frame_s =
      static_cast<double>(tx ? cfg.mesh.tx_frame_len : cfg.mesh.rx_frame_len) / cfg.mesh.sample_rate_hz;
  require(cfg.mesh.cycle_period_s >= frame_s, "cycle_period_s must cover one frame");
  if (cfg.experiment == Experiment::TX_NULL) require(cfg.mesh.n_nodes >= 2, "TX_NULL needs n_nodes ≥ 2");
  if (cfg.experiment == Experiment::TX_NULL)
    require(cfg.mesh.diag_loading_eps > 0, "diag_loading_eps must be > 0 for TX_NULL");
}

double siso_mean_db(const std::vector<LinkRecord>& links, double LinkMetrics::*field) {
  double acc = 0;
  std::size_t n = 0;
  for (const auto& l : links)
    if (l.valid) {
      acc += from_db(l.m.*field);
      ++n;
    }
  return n ? to_db(acc / static_cast<double>(n)) : kNaN;
}

// ---------------------------------------------------------------------------
// Receive beamforming

std::vector<CycleRecord> run_rx_bf(const ScenarioConfig& cfg) {
  validate(cfg);
  const MeshConfig& mesh = cfg.mesh;
  const auto N = static_cast<std::size_t>(mesh.n_nodes);
  const double fs = mesh.sample_rate_hz;
  const std::uint64_t seed = mesh.seed;
  const bool interf = cfg.experiment == Experiment::RX_BF_INTERF && cfg.interferer_power > 0;
  const std::size_t Tw = cfg.rx_filter_taps;

  Rng chan_rng(seed, 0, "channels");
  std::vector<ChannelModel> hA, hJ;
  for (std::size_t n = 0; n < N; ++n) hA.push_back(draw_channel(cfg.source_channels, n, chan_rng, "A→" + node_name(n)));
  for (std::size_t n = 0; n < N; ++n)
    hJ.push_back(draw_channel(cfg.interferer_channels, n, chan_rng, "J→" + node_name(n)));

  std::vector<NodeState> nodes(N);
  init_clocks(nodes, cfg, false, cfg.phase_walk_var_per_s);
  NodeState jammer(0, seed, "interferer-clock");
  jammer.cfo_hz = Rng(seed, 0, "interferer-cfo").uniform(-cfg.cfo_max_hz, cfg.cfo_max_hz);
  std::vector<Rng> noise_rng;
  for (std::size_t n = 0; n < N; ++n) noise_rng.emplace_back(seed, n + 1, "noise");
  Rng jitter_rng(seed, 0, "jitter");
  Rng walk_rng(seed, 0, "channel-walk");

  const FrameLayout layout = frame_layout(FrameKind::RX_BF_SOURCE, mesh);
  const Segment& pay = layout.at("payload");
  const Segment& lt = layout.at("lookthrough");
  const std::size_t est_len = mesh.est_integration_len;
  const std::size_t meas_lt_off = lt.offset + est_len;
  const std::size_t meas_lt_len = lt.length - est_len;
  const ComplexSignal ref_pre = frame_reference(mesh, FrameKind::RX_BF_SOURCE, 1);
  const std::size_t W = mesh.rx_frame_len + cfg.max_lag + kCaptureMargin +
                        std::max(max_response(cfg.source_channels), max_response(cfg.interferer_channels));
  const auto coarse = uniform_grid(0.0, cfg.coarse_cfo_span_hz, cfg.coarse_cfo_step_hz);
  const double pn_siso = noise_autocorr(cfg.noise_power, 1, 0.0, fs)[0].real();

  std::vector<CycleRecord> out;
  out.reserve(cfg.n_cycles);
  for (std::size_t k = 0; k < cfg.n_cycles; ++k) {
    CycleRecord rec;
    rec.cycle = k;
    rec.t_s = static_cast<double>(k) * mesh.cycle_period_s;
    rec.siso.resize(N);
    rec.lag.assign(N, 0);
    rec.detection_stat.assign(N, 0.0);
    rec.cfo_true_hz.resize(N);
    rec.cfo_hat_hz.assign(N, kNaN);

    const Frame src = build_frame({FrameKind::RX_BF_SOURCE, 1, 1, derive_seed(seed, k, "payload")}, mesh);
    ComplexSignal jam;
    if (interf) {
      Frame jf = build_frame({FrameKind::RX_BF_INTERFERER, 1, 1, derive_seed(seed, k, "interference")}, mesh);
      const double a = std::sqrt(cfg.interferer_power);
      for (auto& v : jf.signal.samples) v *= a;
      jam = apply_node_imperfections(jf.signal, jammer);
    }
    draw_jitter(nodes, cfg.ots_jitter_rad, jitter_rng);

    std::vector<ComplexSignal> z(N);
    std::vector<Acquired> acq(N);
    for (std::size_t n = 0; n < N; ++n) {
      ComplexSignal r = fit(apply_channel(src.signal, hA[n]), W);
      if (interf) accumulate(r, apply_channel(jam, hJ[n]));
      rec.cfo_true_hz[n] = nodes[n].cfo_hz;
      r = apply_node_imperfections(r, nodes[n]);
      r = add_noise(r, {cfg.noise_power}, noise_rng[n]);
      if (k == 0 && cfg.on_capture) cfg.on_capture("rx_" + node_name(n), r);
      z[n] = front_end(std::move(r), cfg);
      acq[n] = acquire_refine(z[n], ref_pre, 0, coarse, cfg);
      rec.lag[n] = acq[n].lag;
      rec.detection_stat[n] = acq[n].stat;
      if (!acq[n].ok) {
        rec.acq_failed = true;
        continue;
      }
      rec.cfo_hat_hz[n] = acq[n].cfo;
      rec.cfo_at_boundary = rec.cfo_at_boundary || acq[n].at_boundary;
      z[n] = derotate(z[n], acq[n].cfo);
      rec.siso[n] = make_link({segment_power(z[n], acq[n].lag + pay.offset, pay.length),
                               segment_power(z[n], acq[n].lag + meas_lt_off, meas_lt_len), pn_siso});
    }

    for (auto& nd : nodes) advance_clock(nd, mesh.cycle_period_s - static_cast<double>(W) / fs);
    advance_clock(jammer, mesh.cycle_period_s - static_cast<double>(mesh.rx_frame_len) / fs);
    if (cfg.source_channels.walk_var > 0)
      for (auto& h : hA) perturb_channel(h, cfg.source_channels.walk_var, walk_rng);
    if (cfg.interferer_channels.walk_var > 0)
      for (auto& h : hJ) perturb_channel(h, cfg.interferer_channels.walk_var, walk_rng);

    std::vector<std::size_t> D;
    for (std::size_t n = 0; n < N; ++n)
      if (acq[n].ok) D.push_back(n);
    if (D.empty()) {
      fill_gains(rec);
      rec.phi2_pred = rec.bound_db = kNaN;
      out.push_back(std::move(rec));
      continue;
    }
    std::size_t lead = D.front();
    for (std::size_t n : D)
      if (acq[n].stat > acq[lead].stat) lead = n;
    const std::size_t tau = acq[lead].lag;

    Beamformer bf;
    if (rec.t_s < cfg.all_ones_until_s) {
      bf = all_ones_beamformer(BeamMethod::MMSE_RX, D.size());
      rec.warmup = true;
    } else {
      std::vector<DelayMatrix> Zs, Zl;
      for (std::size_t n : D) {
        Zs.push_back(build_delay_matrix(z[n], tau, mesh.amble_len, Tw, static_cast<int>(n)));
        if (cfg.cov_source == CovarianceSource::INTERFERENCE_ONLY)
          Zl.push_back(build_delay_matrix(z[n], tau + lt.offset, est_len, Tw, static_cast<int>(n)));
      }
      const Eigen::MatrixXcd Z = stack_delay_matrices(Zs);
      Eigen::MatrixXcd Zlt;
      MmseOptions opts;
      opts.loading_eps = mesh.diag_loading_eps;
      if (cfg.cov_source == CovarianceSource::INTERFERENCE_ONLY) {
        Zlt = stack_delay_matrices(Zl);
        opts.source = CovarianceSource::INTERFERENCE_ONLY;
        opts.interference_only = &Zlt;
      }
      bf = mmse_rx_beamformer(Z, training_row(ref_pre.samples, Tw), D.size(), opts);
    }
    bf.source_cycle = static_cast<long>(k);
    rec.bf_source_cycle = bf.source_cycle;

    std::vector<ComplexSignal> zD;
    std::vector<CVec> ac;
    for (std::size_t n : D) {
      zD.push_back(z[n]);
      ac.push_back(noise_autocorr(cfg.noise_power, bf.filter_taps(), acq[n].cfo, fs));
    }
    const ComplexSignal y = apply_rx_beamformer(bf, zD, tau);
    if (k == 0 && cfg.on_capture) cfg.on_capture("bf_out", y);
    rec.bf = make_link({segment_power(y, pay.offset, pay.length), segment_power(y, meas_lt_off, meas_lt_len),
                        output_noise_power(bf, ac)});
    rec.phi2_pred = 0.0;
    rec.bound_db = rx_gain_bound_db(D.size(), 0.0);
    fill_gains(rec);
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transmit beamforming, nulling and coherence

namespace {

struct Receiver {
  std::string name;
  std::vector<ChannelModel> h;  // node n -> receiver
  Rng noise;
};

struct Observation {
  ComplexSignal z;
  std::vector<Acquired> acq;
  std::size_t origin = 0;
  double cfo = 0.0;
  bool all_detected = true;
  std::vector<ChannelEstimate> h_est;
};

Observation observe(const std::vector<ComplexSignal>& tx, Receiver& rx, std::size_t W, const ScenarioConfig& cfg,
                    const std::vector<ComplexSignal>& refs, const FrameLayout& layout,
                    std::span<const double> coarse, bool first_cycle) {
  const std::size_t N = tx.size();
  Observation ob;
  ComplexSignal r(CVec(W, cplx{}), cfg.mesh.sample_rate_hz);
  for (std::size_t n = 0; n < N; ++n) accumulate(r, apply_channel(tx[n], rx.h[n]));
  r = add_noise(r, {cfg.noise_power}, rx.noise);
  if (first_cycle && cfg.on_capture) cfg.on_capture("rx_" + rx.name, r);
  ob.z = front_end(std::move(r), cfg);

  ob.acq.resize(N);
  double cfo_sum = 0;
  std::size_t n_ok = 0;
  std::size_t min_lag = std::numeric_limits<std::size_t>::max();
  for (std::size_t n = 0; n < N; ++n) {
    // TDMA postamble refinement: the slot holds this node alone.
    const std::size_t post = layout.at("postamble_" + std::to_string(n + 1)).offset;
    ob.acq[n] = acquire_refine(ob.z, refs[n], post, coarse, cfg);
    if (!ob.acq[n].ok) {
      ob.all_detected = false;
      continue;
    }
    cfo_sum += ob.acq[n].cfo;
    ++n_ok;
    min_lag = std::min(min_lag, ob.acq[n].lag);
  }
  if (n_ok == 0) return ob;
  ob.cfo = cfo_sum / static_cast<double>(n_ok);
  ob.z = derotate(ob.z, ob.cfo);
  const std::size_t margin = cfg.channel_est_taps > 1 ? 1 : 0;
  ob.origin = min_lag >= margin ? min_lag - margin : 0;
  if (ob.all_detected)
    for (std::size_t n = 0; n < N; ++n)
      ob.h_est.push_back(estimate_channel(ob.z, refs[n], ob.origin, cfg.channel_est_taps, rx.name + node_name(n)));
  return ob;
}

void measure(const Observation& ob, const FrameLayout& layout, std::size_t center_delay, double pn,
             std::vector<LinkRecord>& siso, LinkRecord& bf) {
  const std::size_t N = ob.acq.size();
  siso.assign(N, LinkRecord{});
  bf = LinkRecord{};
  if (ob.acq.empty() || std::none_of(ob.acq.begin(), ob.acq.end(), [](const Acquired& a) { return a.ok; })) return;
  const Segment& tail = layout.at("tail");
  const Segment& bfp = layout.at("bf_payload");
  const double p_tail = segment_power(ob.z, ob.origin + tail.offset, tail.length);
  for (std::size_t n = 0; n < N; ++n) {
    if (!ob.acq[n].ok) continue;
    const Segment& mon = layout.at("monitor_" + std::to_string(n + 1));
    siso[n] = make_link({segment_power(ob.z, ob.acq[n].lag + mon.offset, mon.length), p_tail, pn});
  }
  bf = make_link({segment_power(ob.z, ob.origin + bfp.offset + center_delay, bfp.length), p_tail, pn});
}

struct TxRun {
  const ScenarioConfig& cfg;
  bool nulling;
  bool halt;
};

std::vector<CycleRecord> run_tx(const TxRun& run) {
  const ScenarioConfig& cfg = run.cfg;
  validate(cfg);
  const MeshConfig& mesh = cfg.mesh;
  const auto N = static_cast<std::size_t>(mesh.n_nodes);
  const double fs = mesh.sample_rate_hz;
  const std::uint64_t seed = mesh.seed;
  const double walk_var = run.halt ? effective_walk_var(cfg) : cfg.phase_walk_var_per_s;
  const double jitter_phi2 = 2 * cfg.ots_jitter_rad * cfg.ots_jitter_rad;

  Rng chan_rng(seed, 0, "channels");
  std::vector<Receiver> rxs;
  rxs.push_back({"B", {}, Rng(seed, 101, "noise")});
  for (std::size_t n = 0; n < N; ++n)
    rxs[0].h.push_back(draw_channel(cfg.source_channels, n, chan_rng, node_name(n) + "→B"));
  if (run.nulling) {
    rxs.push_back({"C", {}, Rng(seed, 102, "noise")});
    for (std::size_t n = 0; n < N; ++n)
      rxs[1].h.push_back(draw_channel(cfg.secondary_channels, n, chan_rng, node_name(n) + "→C"));
  }

  std::vector<NodeState> nodes(N);
  init_clocks(nodes, cfg, cfg.shared_mesh_clock, walk_var);
  Rng jitter_rng(seed, 0, "jitter");
  Rng walk_rng(seed, 0, "channel-walk");

  const FrameLayout layout = frame_layout(FrameKind::TX_BF_NODE, mesh);
  const Segment& bfp = layout.at("bf_payload");
  std::vector<ComplexSignal> refs;
  for (std::size_t n = 0; n < N; ++n) refs.push_back(frame_reference(mesh, FrameKind::TX_BF_NODE, static_cast<int>(n + 1)));
  std::size_t resp = std::max(max_response(cfg.source_channels), max_response(cfg.secondary_channels));
  const std::size_t W = mesh.tx_frame_len + cfg.max_lag + kCaptureMargin + resp;
  const auto coarse = uniform_grid(0.0, cfg.coarse_cfo_span_hz, cfg.coarse_cfo_step_hz);
  const double pn = noise_autocorr(cfg.noise_power, 1, 0.0, fs)[0].real();
  const double tx_scale = run.nulling ? std::sqrt(static_cast<double>(N)) : 1.0;
  const BeamMethod method = run.nulling ? BeamMethod::TX_NULL : BeamMethod::STMF;

  std::deque<Beamformer> feedback;  // computed beamformers in source-cycle order
  std::vector<CycleRecord> out;
  out.reserve(cfg.n_cycles);
  for (std::size_t k = 0; k < cfg.n_cycles; ++k) {
    CycleRecord rec;
    rec.cycle = k;
    rec.t_s = static_cast<double>(k) * mesh.cycle_period_s;
    rec.post_halt = run.halt && rec.t_s >= cfg.feedback_halt_time_s;

    // Newest beamformer whose receptions are at least the latency old.
    Beamformer bf = all_ones_beamformer(method, N);
    for (const auto& cand : feedback)
      if (cand.source_cycle + static_cast<long>(cfg.feedback_latency_cycles) <= static_cast<long>(k)) bf = cand;
    if (bf.source_cycle < 0) {
      rec.warmup = true;
    } else if (bf.source_cycle > static_cast<long>(k) - static_cast<long>(cfg.feedback_latency_cycles)) {
      throw std::logic_error("feedback causality violated");
    }
    rec.bf_source_cycle = bf.source_cycle;
    const double scale = bf.source_cycle < 0 ? 1.0 : tx_scale;

    draw_jitter(nodes, cfg.ots_jitter_rad, jitter_rng);
    const std::uint64_t pseed = derive_seed(seed, k, "payload");
    std::vector<ComplexSignal> tx(N);
    std::vector<double> genie_phase(N);
    for (std::size_t n = 0; n < N; ++n) {
      Frame f = build_frame({FrameKind::TX_BF_NODE, static_cast<int>(n + 1), 1, pseed}, mesh);
      const CVec clean = segment_samples(f, "bf_payload");
      CVec pd = predistort(bf.weights[n], clean);
      for (std::size_t i = 0; i < pd.size() && bfp.offset + i < f.signal.size(); ++i)
        f.signal[bfp.offset + i] = scale * pd[i];
      genie_phase[n] = nodes[n].phase_rad + nodes[n].cycle_jitter_rad;
      tx[n] = apply_node_imperfections(f.signal, nodes[n]);
    }

    std::vector<Observation> obs;
    for (auto& rx : rxs) obs.push_back(observe(tx, rx, W, cfg, refs, layout, coarse, k == 0));

    rec.lag.assign(N, 0);
    rec.detection_stat.assign(N, 0.0);
    rec.cfo_true_hz.resize(N);
    rec.cfo_hat_hz.assign(N, kNaN);
    for (std::size_t n = 0; n < N; ++n) {
      const Acquired& a = obs[0].acq[n];
      rec.lag[n] = a.lag;
      rec.detection_stat[n] = a.stat;
      rec.cfo_true_hz[n] = nodes[n].cfo_hz;
      if (a.ok) rec.cfo_hat_hz[n] = a.cfo;
      rec.cfo_at_boundary = rec.cfo_at_boundary || a.at_boundary;
    }
    for (const auto& ob : obs) rec.acq_failed = rec.acq_failed || !ob.all_detected;

    measure(obs[0], layout, bf.center_delay, pn, rec.siso, rec.bf);
    if (run.nulling) measure(obs[1], layout, bf.center_delay, pn, rec.siso_c, rec.bf_c);
    if (!run.nulling && bf.source_cycle >= 0) {
      const double dt = rec.t_s - static_cast<double>(bf.source_cycle) * mesh.cycle_period_s;
      rec.phi2_pred = walk_var * dt + jitter_phi2;
      rec.bound_db = power_gain_bound_db(N, rec.phi2_pred);
    } else {
      rec.phi2_pred = rec.bound_db = kNaN;
    }
    fill_gains(rec);
    out.push_back(std::move(rec));

    for (auto& nd : nodes) advance_clock(nd, mesh.cycle_period_s - static_cast<double>(mesh.tx_frame_len) / fs);

    // Feedback from this cycle's receptions.
    const bool fb_on = !run.halt || static_cast<double>(k) * mesh.cycle_period_s < cfg.feedback_halt_time_s;
    if (fb_on) {
      std::vector<std::vector<ChannelEstimate>> est(rxs.size());
      bool ok = true;
      for (std::size_t r = 0; r < rxs.size(); ++r) {
        if (cfg.genie_channels) {
          for (std::size_t n = 0; n < N; ++n) {
            ChannelEstimate e;
            for (const auto& v : rxs[r].h[n].taps) e.taps.push_back(v * std::polar(1.0, genie_phase[n]));
            est[r].push_back(std::move(e));
          }
        } else if (obs[r].all_detected) {
          est[r] = obs[r].h_est;
        } else {
          ok = false;
        }
      }
      if (ok) {
        Beamformer next;
        if (run.nulling) {
          CVec hB(N), hC(N);
          double c_energy = 0;
          for (std::size_t n = 0; n < N; ++n) {
            hB[n] = dominant_tap(est[0][n].taps);
            hC[n] = dominant_tap(est[1][n].taps);
            c_energy += std::norm(hC[n]);
          }
          const double delta = mesh.diag_loading_eps * std::max(c_energy, 1e-300) / static_cast<double>(N);
          const CVec w = tx_null_beamformer(hB, hC, delta);
          next.method = BeamMethod::TX_NULL;
          next.loading = delta;
          for (const auto& v : w) next.weights.push_back(CVec{v});
        } else {
          next = stmf_beamformer(est[0]);
        }
        next.source_cycle = static_cast<long>(k);
        feedback.push_back(std::move(next));
        while (feedback.size() > cfg.feedback_latency_cycles + 1) feedback.pop_front();
      }
    }

    for (std::size_t r = 0; r < rxs.size(); ++r) {
      const ChannelSpec& spec = r == 0 ? cfg.source_channels : cfg.secondary_channels;
      if (spec.walk_var > 0)
        for (auto& h : rxs[r].h) perturb_channel(h, spec.walk_var, walk_rng);
    }
  }
  return out;
}

}  // namespace

double effective_walk_var(const ScenarioConfig& cfg) {
  if (cfg.experiment != Experiment::COHERENCE || cfg.terminal_phi2 <= 0) return cfg.phase_walk_var_per_s;
  const double T = cfg.mesh.cycle_period_s;
  // Last cycle whose receptions are fed back.
  const double last_fb = std::ceil(cfg.feedback_halt_time_s / T - 1e-9) - 1;
  const double t_end = static_cast<double>(cfg.n_cycles - 1) * T;
  const double span = t_end - std::max(last_fb, 0.0) * T;
  if (!(span > 0)) throw ConfigError("terminal_phi2: run ends before feedback halts");
  const double jitter = 2 * cfg.ots_jitter_rad * cfg.ots_jitter_rad;
  return std::max(cfg.terminal_phi2 - jitter, 0.0) / span;
}

std::vector<CycleRecord> run_tx_bf(const ScenarioConfig& cfg) { return run_tx({cfg, false, false}); }
std::vector<CycleRecord> run_tx_null(const ScenarioConfig& cfg) { return run_tx({cfg, true, false}); }
std::vector<CycleRecord> run_coherence(const ScenarioConfig& cfg) { return run_tx({cfg, false, true}); }

std::vector<CycleRecord> run_scenario(const ScenarioConfig& cfg) {
  switch (cfg.experiment) {
    case Experiment::RX_BF:
    case Experiment::RX_BF_INTERF: return run_rx_bf(cfg);
    case Experiment::TX_BF: return run_tx_bf(cfg);
    case Experiment::TX_NULL: return run_tx_null(cfg);
    case Experiment::COHERENCE: return run_coherence(cfg);
  }
  throw std::logic_error("unhandled experiment");
}

ScenarioSummary summarize(const ScenarioConfig& cfg, const std::vector<CycleRecord>& records) {
  ScenarioSummary s;
  s.n_cycles = records.size();
  double g = 0, gi = 0, gs = 0, gc = 0, ss = 0, si = 0, bi = 0, bd = 0;
  std::size_t n_c = 0, n_b = 0;
  for (const auto& r : records) {
    if (r.warmup) ++s.n_warmup;
    if (r.acq_failed) ++s.n_acq_failed;
    if (r.warmup || !r.bf.valid || !std::isfinite(r.snr_gain_db)) continue;
    ++s.n_used;
    g += r.snr_gain_db;
    gi += r.inr_gain_db;
    gs += r.sinr_gain_db;
    ss += siso_mean_db(r.siso, &LinkMetrics::snr_db);
    si += siso_mean_db(r.siso, &LinkMetrics::inr_db);
    bi += r.bf.m.inr_db;
    if (std::isfinite(r.snr_gain_c_db)) {
      gc += r.snr_gain_c_db;
      ++n_c;
    }
    if (std::isfinite(r.bound_db)) {
      bd += r.bound_db;
      ++n_b;
    }
  }
  const double u = static_cast<double>(s.n_used);
  s.mean_snr_gain_db = s.n_used ? g / u : kNaN;
  s.mean_inr_gain_db = s.n_used ? gi / u : kNaN;
  s.mean_sinr_gain_db = s.n_used ? gs / u : kNaN;
  s.mean_siso_snr_db = s.n_used ? ss / u : kNaN;
  s.mean_siso_inr_db = s.n_used ? si / u : kNaN;
  s.mean_bf_inr_db = s.n_used ? bi / u : kNaN;
  s.mean_snr_gain_c_db = n_c ? gc / static_cast<double>(n_c) : kNaN;
  s.mean_bound_db = n_b ? bd / static_cast<double>(n_b) : kNaN;
  const auto N = static_cast<std::size_t>(cfg.mesh.n_nodes);
  s.configured_phi2 = 2 * cfg.ots_jitter_rad * cfg.ots_jitter_rad;
  s.power_gain_bound_db = power_gain_bound_db(N, s.configured_phi2);
  s.rx_gain_bound_db = rx_gain_bound_db(N, s.configured_phi2);
  s.inr_reduction_bound = inr_reduction_bound(N, s.configured_phi2);
  return s;
}

}  // namespace dcbf
