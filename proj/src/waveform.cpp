// SPDX-License-Identifier: Apache-2.0

#include "dcbf/waveform.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>

namespace dcbf {

namespace {

constexpr int kMinRegister = 3;
constexpr int kMaxRegister = 14;

void check_register(int m) {
  if (m < kMinRegister || m > kMaxRegister)
    throw std::invalid_argument("MLS register length " + std::to_string(m) + " outside [3, 14]");
}

// Feedback mask over register cells 0..m-1: a[n+m] = xor of a[n+i] for i in mask.
std::uint32_t feedback_mask(int m, std::span<const int> taps) {
  bool has_top = false;
  std::uint32_t mask = 1u;  // constant term
  for (int e : taps) {
    if (e == m) {
      has_top = true;
    } else if (e > 0 && e < m) {
      mask ^= (1u << e);
    } else if (e != 0) {
      throw std::invalid_argument("tap exponent " + std::to_string(e) + " out of range");
    }
  }
  if (!has_top) throw std::invalid_argument("tap set must include the leading exponent m");
  return mask;
}

std::uint32_t step(std::uint32_t state, std::uint32_t mask, int m) {
  const std::uint32_t fb = static_cast<std::uint32_t>(std::popcount(state & mask) & 1);
  return (state >> 1) | (fb << (m - 1));
}

std::uint64_t period_of(int m, std::uint32_t mask, std::uint32_t seed) {
  const std::uint64_t full = (1ull << m) - 1;
  std::uint32_t s = seed;
  for (std::uint64_t n = 1; n <= full; ++n) {
    s = step(s, mask, m);
    if (s == seed) return n;
  }
  return 0;
}

std::vector<TapSet> enumerate_primitive(int m, int count) {
  std::vector<TapSet> out;
  const TapSet def = default_mls_taps(m);
  out.push_back(def);
  auto consider = [&](TapSet t) {
    if (static_cast<int>(out.size()) >= count) return;
    if (t == def) return;
    if (is_primitive(m, t)) out.push_back(std::move(t));
  };
  for (int k = 1; k < m && static_cast<int>(out.size()) < count; ++k) consider({m, k});
  for (int a = m - 1; a >= 3 && static_cast<int>(out.size()) < count; --a)
    for (int b = a - 1; b >= 2 && static_cast<int>(out.size()) < count; --b)
      for (int c = b - 1; c >= 1 && static_cast<int>(out.size()) < count; --c) consider({m, a, b, c});
  return out;
}

}  // namespace

TapSet default_mls_taps(int m) {
  check_register(m);
  static const std::map<int, TapSet> table = {
      {3, {3, 1}},         {4, {4, 1}},          {5, {5, 2}},         {6, {6, 1}},
      {7, {7, 1}},         {8, {8, 4, 3, 2}},    {9, {9, 4}},         {10, {10, 3}},
      {11, {11, 2}},       {12, {12, 6, 4, 1}},  {13, {13, 4, 3, 1}}, {14, {14, 10, 6, 1}},
  };
  return table.at(m);
}

bool is_primitive(int m, std::span<const int> taps) {
  check_register(m);
  const std::uint32_t mask = feedback_mask(m, taps);
  return period_of(m, mask, 1u) == (1ull << m) - 1;
}

TapSet primitive_taps(int m, int index) {
  check_register(m);
  if (index < 0) throw std::invalid_argument("polynomial index must be ≥ 0");
  static std::mutex mu;
  static std::map<int, std::vector<TapSet>> cache;
  std::lock_guard lock(mu);
  auto& list = cache[m];
  if (static_cast<int>(list.size()) <= index) list = enumerate_primitive(m, index + 1);
  if (static_cast<int>(list.size()) <= index)
    throw std::invalid_argument("fewer than " + std::to_string(index + 1) + " primitive polynomials enumerated for m=" +
                                std::to_string(m));
  return list[index];
}

std::vector<int> gen_mls(int m, std::span<const int> taps, std::uint32_t seed_state) {
  check_register(m);
  const std::uint32_t mask = feedback_mask(m, taps);
  const std::uint32_t full_mask = (1u << m) - 1;
  std::uint32_t s = seed_state & full_mask;
  if (s == 0) throw std::invalid_argument("MLS seed state must be nonzero");
  if (period_of(m, mask, s) != (1ull << m) - 1) throw std::invalid_argument("tap set is not a primitive polynomial");
  const std::size_t n = (std::size_t{1} << m) - 1;
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = (s & 1u) ? 1 : -1;
    s = step(s, mask, m);
  }
  return out;
}

int bits_per_symbol(Modulation m) { return m == Modulation::QPSK ? 2 : 8; }

SymbolStream modulate(std::span<const std::uint8_t> bits, Modulation m) {
  const std::size_t bps = static_cast<std::size_t>(bits_per_symbol(m));
  if (bits.size() % bps != 0)
    throw std::invalid_argument("bit count " + std::to_string(bits.size()) + " not divisible by " +
                                std::to_string(bps));
  SymbolStream out{{}, m};
  out.symbols.reserve(bits.size() / bps);
  if (m == Modulation::QPSK) {
    const double a = 1.0 / std::sqrt(2.0);
    for (std::size_t i = 0; i < bits.size(); i += 2)
      out.symbols.emplace_back(a * (1.0 - 2.0 * (bits[i] & 1)), a * (1.0 - 2.0 * (bits[i + 1] & 1)));
  } else {
    const double scale = 1.0 / std::sqrt(170.0);
    auto level = [&](std::size_t at) {
      unsigned g = 0;
      for (int k = 0; k < 4; ++k) g = (g << 1) | (bits[at + k] & 1u);
      unsigned idx = g;
      for (unsigned shift = g >> 1; shift; shift >>= 1) idx ^= shift;
      return 2.0 * idx - 15.0;
    };
    for (std::size_t i = 0; i < bits.size(); i += 8) out.symbols.emplace_back(scale * level(i), scale * level(i + 4));
  }
  return out;
}

std::vector<std::uint8_t> demodulate_qpsk(std::span<const cplx> symbols) {
  std::vector<std::uint8_t> bits;
  bits.reserve(symbols.size() * 2);
  for (const auto& s : symbols) {
    bits.push_back(s.real() < 0 ? 1 : 0);
    bits.push_back(s.imag() < 0 ? 1 : 0);
  }
  return bits;
}

std::vector<double> rrc_taps(double beta, int sps, int span_symbols) {
  const int n = span_symbols * sps + 1;
  const int half = n / 2;
  std::vector<double> h(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i - half) / sps;
    double v;
    if (std::abs(t) < 1e-12) {
      v = 1.0 - beta + 4.0 * beta / kPi;
    } else if (beta > 0 && std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-9) {
      v = beta / std::sqrt(2.0) *
          ((1 + 2 / kPi) * std::sin(kPi / (4 * beta)) + (1 - 2 / kPi) * std::cos(kPi / (4 * beta)));
    } else {
      const double x = 4.0 * beta * t;
      v = (std::sin(kPi * t * (1 - beta)) + 4 * beta * t * std::cos(kPi * t * (1 + beta))) / (kPi * t * (1 - x * x));
    }
    h[static_cast<std::size_t>(i)] = v;
  }
  double e = 0;
  for (double v : h) e += v * v;
  for (double& v : h) v /= std::sqrt(e);
  return h;
}

namespace {

const std::vector<double>& shared_rrc() {
  static const std::vector<double> taps = rrc_taps();
  return taps;
}

}  // namespace

CVec pulse_shape(std::span<const cplx> symbols, std::size_t out_len) {
  const auto& g = shared_rrc();
  const int half = static_cast<int>(g.size() / 2);
  const double gain = std::sqrt(static_cast<double>(kSamplesPerSymbol));
  CVec out(out_len, cplx{});
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    const long centre = static_cast<long>(k) * kSamplesPerSymbol;
    for (int j = -half; j <= half; ++j) {
      const long t = centre + j;
      if (t < 0 || t >= static_cast<long>(out_len)) continue;
      out[static_cast<std::size_t>(t)] += gain * g[static_cast<std::size_t>(j + half)] * symbols[k];
    }
  }
  return out;
}

ComplexSignal matched_filter(const ComplexSignal& x) {
  const auto& g = shared_rrc();
  const long half = static_cast<long>(g.size() / 2);
  const long n = static_cast<long>(x.size());
  CVec out(x.size(), cplx{});
  for (long t = 0; t < n; ++t) {
    cplx acc{};
    const long lo = std::max(0L, t - half);
    const long hi = std::min(n - 1, t + half);
    for (long u = lo; u <= hi; ++u) acc += g[static_cast<std::size_t>(t - u + half)] * x.samples[static_cast<std::size_t>(u)];
    out[static_cast<std::size_t>(t)] = acc;
  }
  return {std::move(out), x.sample_rate_hz};
}

CVec mls_qpsk_symbols(std::size_t n_symbols, int code, std::uint32_t seed_state) {
  const std::size_t n_bits = 2 * n_symbols;
  int m = 3;
  while (m < 14 && ((std::size_t{1} << (m + 1)) - 1) <= n_bits) ++m;
  const TapSet taps = primitive_taps(m, code);
  const auto seq = gen_mls(m, taps, seed_state);
  std::vector<std::uint8_t> bits(n_bits);
  for (std::size_t i = 0; i < n_bits; ++i) bits[i] = seq[i % seq.size()] > 0 ? 0 : 1;
  return modulate(bits, Modulation::QPSK).symbols;
}

FrameLayout frame_layout(FrameKind kind, const MeshConfig& cfg) {
  FrameLayout L;
  int guard_no = 0;
  auto guard = [&] { L.append("guard_" + std::to_string(++guard_no), cfg.guard_len); };
  auto overflow = [](const std::string& what, std::size_t need, std::size_t have) {
    throw ConfigError("layout overflow: " + what + " segments need " + std::to_string(need) +
                      " samples but frame length is " + std::to_string(have));
  };
  switch (kind) {
    case FrameKind::RX_BF_SOURCE: {
      L.total_length = cfg.rx_frame_len;
      const std::size_t fixed = 2 * cfg.amble_len + cfg.payload_len + 3 * cfg.guard_len;
      if (fixed >= L.total_length) overflow("receive source", fixed, L.total_length);
      L.append("preamble", cfg.amble_len);
      guard();
      L.append("payload", cfg.payload_len);
      guard();
      L.append("lookthrough", L.total_length - fixed);
      guard();
      L.append("postamble", cfg.amble_len);
      break;
    }
    case FrameKind::RX_BF_INTERFERER:
      L.total_length = cfg.rx_frame_len;
      L.append("interference", cfg.rx_frame_len);
      break;
    case FrameKind::TX_BF_NODE: {
      L.total_length = cfg.tx_frame_len;
      const std::size_t n = static_cast<std::size_t>(cfg.n_nodes);
      const std::size_t fixed = (1 + n) * cfg.amble_len + (1 + n) * cfg.payload_len + (2 * n + 2) * cfg.guard_len;
      if (fixed >= L.total_length) overflow("transmit node", fixed, L.total_length);
      L.append("preamble", cfg.amble_len);
      guard();
      L.append("bf_payload", cfg.payload_len);
      for (std::size_t i = 1; i <= n; ++i) {
        guard();
        L.append("monitor_" + std::to_string(i), cfg.payload_len);
      }
      for (std::size_t i = 1; i <= n; ++i) {
        guard();
        L.append("postamble_" + std::to_string(i), cfg.amble_len);
      }
      guard();
      L.append("tail", L.total_length - fixed);
      break;
    }
  }
  L.check();
  return L;
}

namespace {

CVec random_qpsk(std::size_t n_symbols, Rng& rng) {
  std::vector<std::uint8_t> bits(2 * n_symbols);
  for (auto& b : bits) b = static_cast<std::uint8_t>(rng.bit());
  return modulate(bits, Modulation::QPSK).symbols;
}

void place(CVec& frame, const Segment& seg, std::span<const cplx> content) {
  for (std::size_t i = 0; i < seg.length && i < content.size(); ++i) frame[seg.offset + i] = content[i];
}

}  // namespace

Frame build_frame(const FrameSpec& spec, const MeshConfig& cfg) {
  validate_config(cfg);
  Frame f;
  f.layout = frame_layout(spec.kind, cfg);
  CVec s(f.layout.total_length, cplx{});
  const std::size_t sps = kSamplesPerSymbol;
  Rng payload_rng(spec.payload_seed, 0, "payload");

  switch (spec.kind) {
    case FrameKind::RX_BF_SOURCE: {
      const CVec amble = pulse_shape(mls_qpsk_symbols(cfg.amble_len / sps, 0, spec.amble_seed), cfg.amble_len);
      const CVec payload = pulse_shape(random_qpsk(cfg.payload_len / sps, payload_rng), cfg.payload_len);
      place(s, f.layout.at("preamble"), amble);
      place(s, f.layout.at("payload"), payload);
      place(s, f.layout.at("postamble"), amble);
      break;
    }
    case FrameKind::RX_BF_INTERFERER: {
      const std::size_t n_sym = (f.layout.total_length + sps - 1) / sps;
      std::vector<std::uint8_t> bits(8 * n_sym);
      for (auto& b : bits) b = static_cast<std::uint8_t>(payload_rng.bit());
      const CVec sym = modulate(bits, Modulation::QAM256).symbols;
      s = pulse_shape(sym, f.layout.total_length);
      break;
    }
    case FrameKind::TX_BF_NODE: {
      if (spec.node_id < 1 || spec.node_id > cfg.n_nodes)
        throw std::invalid_argument("node_id " + std::to_string(spec.node_id) + " outside [1, n_nodes]");
      const int code = spec.node_id - 1;
      const CVec amble = pulse_shape(mls_qpsk_symbols(cfg.amble_len / sps, code, spec.amble_seed), cfg.amble_len);
      const CVec payload = pulse_shape(random_qpsk(cfg.payload_len / sps, payload_rng), cfg.payload_len);
      const std::string id = std::to_string(spec.node_id);
      place(s, f.layout.at("preamble"), amble);
      place(s, f.layout.at("bf_payload"), payload);
      place(s, f.layout.at("monitor_" + id), payload);
      place(s, f.layout.at("postamble_" + id), amble);
      break;
    }
  }
  f.signal = ComplexSignal(std::move(s), cfg.sample_rate_hz);
  return f;
}

CVec segment_samples(const Frame& f, std::string_view name) {
  const Segment& seg = f.layout.at(name);
  return CVec(f.signal.samples.begin() + static_cast<long>(seg.offset),
              f.signal.samples.begin() + static_cast<long>(seg.end()));
}

}  // namespace dcbf
