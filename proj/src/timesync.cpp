// SPDX-License-Identifier: Apache-2.0

#include "dcbf/timesync.hpp"

#include <array>
#include <bit>
#include <cmath>

#include "dcbf/waveform.hpp"

namespace dcbf {

namespace {

constexpr double kTwo64 = 18446744073709551616.0;

}  // namespace

double Timestamp::to_seconds() const { return static_cast<double>(integer_part) + static_cast<double>(frac_part) / kTwo64; }

SignedDuration SignedDuration::from_raw(i128 v) {
  // Arithmetic shift floors, so frac is always the non-negative remainder.
  return {static_cast<std::int64_t>(v >> 64), static_cast<std::uint64_t>(static_cast<u128>(v))};
}

double SignedDuration::to_seconds() const { return static_cast<double>(seconds) + static_cast<double>(frac) / kTwo64; }

Timestamp timestamp_from_samples(std::uint64_t samples, std::uint64_t fs_hz) {
  if (fs_hz == 0) throw std::invalid_argument("sample rate must be > 0");
  const std::uint64_t whole = samples / fs_hz;
  const u128 rem = samples % fs_hz;
  return {whole, static_cast<std::uint64_t>((rem << 64) / fs_hz)};
}

SignedDuration duration_from_samples(std::int64_t samples, std::uint64_t fs_hz) {
  const bool neg = samples < 0;
  const std::uint64_t mag = neg ? static_cast<std::uint64_t>(-(samples + 1)) + 1 : static_cast<std::uint64_t>(samples);
  const Timestamp t = timestamp_from_samples(mag, fs_hz);
  const i128 v = static_cast<i128>(t.raw());
  return SignedDuration::from_raw(neg ? -v : v);
}

SignedDuration operator-(const Timestamp& a, const Timestamp& b) {
  return SignedDuration::from_raw(static_cast<i128>(a.raw()) - static_cast<i128>(b.raw()));
}

SignedDuration operator-(const SignedDuration& a, const SignedDuration& b) {
  return SignedDuration::from_raw(a.raw() - b.raw());
}

Timestamp operator+(const Timestamp& t, const SignedDuration& d) {
  return Timestamp::from_raw(static_cast<u128>(static_cast<i128>(t.raw()) + d.raw()));
}

SignedDuration estimate_offset(const Timestamp& t_tx_n, const Timestamp& t_rx_L, const Timestamp& t_tx_L,
                               const Timestamp& t_rx_n) {
  auto i = [](const Timestamp& t) { return static_cast<i128>(t.integer_part); };
  auto f = [](const Timestamp& t) { return static_cast<i128>(t.frac_part); };
  const i128 int_sum = (i(t_rx_L) - i(t_tx_n)) - (i(t_rx_n) - i(t_tx_L));
  const i128 frac_sum = (f(t_rx_L) - f(t_tx_n)) - (f(t_rx_n) - f(t_tx_L));
  const i128 twice = int_sum * (static_cast<i128>(1) << 64) + frac_sum;
  return SignedDuration::from_raw(twice >> 1);
}

// --- Golay -------------------------------------------------------------------

namespace {

constexpr std::array<std::uint16_t, 12> kGolayB = {
    0b110111000101, 0b101110001011, 0b011100010111, 0b111000101101, 0b110001011011, 0b100010110111,
    0b000101101111, 0b001011011101, 0b010110111001, 0b101101110001, 0b011011100011, 0b111111111110,
};

std::uint16_t golay_parity(std::uint16_t d) {
  std::uint16_t p = 0;
  for (int i = 0; i < 12; ++i)
    if ((d >> (11 - i)) & 1u) p ^= kGolayB[static_cast<std::size_t>(i)];
  return p;
}

std::uint16_t golay_syndrome(std::uint32_t w) {
  const auto d = static_cast<std::uint16_t>((w >> 12) & 0xfffu);
  const auto p = static_cast<std::uint16_t>(w & 0xfffu);
  return static_cast<std::uint16_t>(golay_parity(d) ^ p);
}

struct SyndromeTable {
  // Error pattern per syndrome; 0xffffffff marks syndromes with no pattern of weight <= 3.
  std::array<std::uint32_t, 4096> pattern{};
  SyndromeTable() {
    pattern.fill(0xffffffffu);
    pattern[0] = 0;
    for (int a = 0; a < 24; ++a) {
      const std::uint32_t ea = 1u << a;
      pattern[golay_syndrome(ea)] = ea;
      for (int b = a + 1; b < 24; ++b) {
        const std::uint32_t eb = ea | (1u << b);
        pattern[golay_syndrome(eb)] = eb;
        for (int c = b + 1; c < 24; ++c) {
          const std::uint32_t ec = eb | (1u << c);
          pattern[golay_syndrome(ec)] = ec;
        }
      }
    }
  }
};

const SyndromeTable& syndrome_table() {
  static const SyndromeTable t;
  return t;
}

}  // namespace

std::uint32_t golay_encode(std::uint16_t data12) {
  const auto d = static_cast<std::uint16_t>(data12 & 0xfffu);
  return (static_cast<std::uint32_t>(d) << 12) | golay_parity(d);
}

std::optional<GolayDecoded> golay_decode(std::uint32_t word24) {
  word24 &= 0xffffffu;
  const std::uint32_t e = syndrome_table().pattern[golay_syndrome(word24)];
  if (e == 0xffffffffu) return std::nullopt;
  const std::uint32_t c = word24 ^ e;
  return GolayDecoded{static_cast<std::uint16_t>(c >> 12), std::popcount(e)};
}

// --- Hamming -----------------------------------------------------------------

std::uint8_t hamming_encode(std::uint8_t data4) {
  const int d1 = (data4 >> 3) & 1, d2 = (data4 >> 2) & 1, d3 = (data4 >> 1) & 1, d4 = data4 & 1;
  const int p1 = d1 ^ d2 ^ d4;
  const int p2 = d1 ^ d3 ^ d4;
  const int p3 = d2 ^ d3 ^ d4;
  // positions 1..7: p1 p2 d1 p3 d2 d3 d4
  const int bits[7] = {p1, p2, d1, p3, d2, d3, d4};
  std::uint8_t w = 0;
  for (int p = 0; p < 7; ++p) w |= static_cast<std::uint8_t>(bits[p] << p);
  return w;
}

HammingDecoded hamming_decode(std::uint8_t word7) {
  int syndrome = 0;
  for (int p = 1; p <= 7; ++p)
    if ((word7 >> (p - 1)) & 1) syndrome ^= p;
  HammingDecoded out;
  if (syndrome != 0) {
    word7 ^= static_cast<std::uint8_t>(1u << (syndrome - 1));
    out.corrected = 1;
  }
  auto bit = [&](int pos) { return (word7 >> (pos - 1)) & 1; };
  out.data = static_cast<std::uint8_t>((bit(3) << 3) | (bit(5) << 2) | (bit(6) << 1) | bit(7));
  return out;
}

// --- Message codec -----------------------------------------------------------

namespace {

void push_bits(std::vector<std::uint8_t>& out, std::uint64_t v, int n) {
  for (int i = n - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((v >> i) & 1u));
}

std::uint64_t read_bits(std::span<const std::uint8_t> in, std::size_t at, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v = (v << 1) | (in[at + static_cast<std::size_t>(i)] & 1u);
  return v;
}

void push_timestamp(std::vector<std::uint8_t>& out, const Timestamp& t) {
  push_bits(out, t.integer_part, 64);
  push_bits(out, t.frac_part, 64);
}

Timestamp read_timestamp(std::span<const std::uint8_t> in, std::size_t at) {
  return {read_bits(in, at, 64), read_bits(in, at + 64, 64)};
}

std::size_t coded_bits_for(std::size_t data_bits) {
  const std::size_t outer = (data_bits / 4) * 7;
  const std::size_t blocks = (outer + 11) / 12;
  return blocks * 24;
}

// Golay-decodes whole 24-bit blocks into a flat stream of outer-code bits.
std::vector<std::uint8_t> inner_decode(std::span<const std::uint8_t> bits, std::size_t blocks, int& corrected) {
  std::vector<std::uint8_t> outer;
  outer.reserve(blocks * 12);
  for (std::size_t b = 0; b < blocks; ++b) {
    const auto w = static_cast<std::uint32_t>(read_bits(bits, b * 24, 24));
    const auto dec = golay_decode(w);
    if (!dec) throw SyncDecodeError("Golay decode failure in block " + std::to_string(b));
    corrected += dec->corrected_errors;
    push_bits(outer, dec->data, 12);
  }
  return outer;
}

std::vector<std::uint8_t> outer_decode(std::span<const std::uint8_t> outer, std::size_t n_nibbles, int& corrected) {
  std::vector<std::uint8_t> data;
  data.reserve(n_nibbles * 4);
  for (std::size_t k = 0; k < n_nibbles; ++k) {
    std::uint8_t w = 0;
    for (int p = 0; p < 7; ++p) w |= static_cast<std::uint8_t>((outer[k * 7 + static_cast<std::size_t>(p)] & 1u) << p);
    const auto dec = hamming_decode(w);
    corrected += dec.corrected;
    push_bits(data, dec.data, 4);
  }
  return data;
}

SyncMessage parse_data(std::span<const std::uint8_t> data) {
  const auto header = static_cast<std::uint8_t>(read_bits(data, 0, 8));
  SyncMessage m;
  m.kind = static_cast<SyncKind>(header & 0x0f);
  m.uses_index = (header >> 4) & 1;
  m.t_tx_follower = read_timestamp(data, 8);
  if (m.kind == SyncKind::LeaderReply) {
    m.t_tx_leader = read_timestamp(data, 136);
    m.t_rx_leader = read_timestamp(data, 264);
  }
  return m;
}

SyncKind header_kind(std::uint64_t header) {
  const auto k = header & 0x0f;
  if (k != 1 && k != 2) throw SyncDecodeError("unknown message kind " + std::to_string(k));
  if ((header & 0xe0) != 0) throw SyncDecodeError("reserved header bits set");
  return static_cast<SyncKind>(k);
}

}  // namespace

std::size_t sync_data_bits(SyncKind kind) { return kind == SyncKind::LeaderReply ? 8 + 3 * 128 : 8 + 128; }

std::vector<std::uint8_t> sync_data_bits(const SyncMessage& msg) {
  std::vector<std::uint8_t> d;
  d.reserve(sync_data_bits(msg.kind));
  push_bits(d, static_cast<std::uint64_t>(msg.kind) | (msg.uses_index ? 0x10u : 0u), 8);
  push_timestamp(d, msg.t_tx_follower);
  if (msg.kind == SyncKind::LeaderReply) {
    push_timestamp(d, msg.t_tx_leader);
    push_timestamp(d, msg.t_rx_leader);
  }
  return d;
}

std::vector<std::uint8_t> encode_sync_message(const SyncMessage& msg, FecMode fec) {
  const auto data = sync_data_bits(msg);
  if (fec == FecMode::None) return data;
  std::vector<std::uint8_t> outer;
  outer.reserve(data.size() / 4 * 7);
  for (std::size_t i = 0; i < data.size(); i += 4) {
    const auto w = hamming_encode(static_cast<std::uint8_t>(read_bits(data, i, 4)));
    for (int p = 0; p < 7; ++p) outer.push_back(static_cast<std::uint8_t>((w >> p) & 1u));
  }
  while (outer.size() % 12) outer.push_back(0);
  std::vector<std::uint8_t> coded;
  coded.reserve(outer.size() * 2);
  for (std::size_t i = 0; i < outer.size(); i += 12)
    push_bits(coded, golay_encode(static_cast<std::uint16_t>(read_bits(outer, i, 12))), 24);
  return coded;
}

DecodedSync decode_sync_message(std::span<const std::uint8_t> bits, FecMode fec) {
  DecodedSync out;
  if (fec == FecMode::None) {
    if (bits.size() < 8) throw SyncDecodeError("message truncated");
    const SyncKind kind = header_kind(read_bits(bits, 0, 8));
    if (bits.size() < sync_data_bits(kind)) throw SyncDecodeError("message truncated");
    out.msg = parse_data(bits);
    return out;
  }
  // Two inner blocks carry 24 outer bits: enough for the two header nibbles.
  if (bits.size() < 48) throw SyncDecodeError("message truncated");
  int g = 0, h = 0;
  const auto head_outer = inner_decode(bits, 2, g);
  int h_tmp = 0;
  const SyncKind kind = header_kind(read_bits(outer_decode(head_outer, 2, h_tmp), 0, 8));
  const std::size_t n_data = sync_data_bits(kind);
  const std::size_t need = coded_bits_for(n_data);
  if (bits.size() < need) throw SyncDecodeError("message truncated");
  g = 0;
  const auto outer = inner_decode(bits, need / 24, g);
  const auto data = outer_decode(outer, n_data / 4, h);
  out.msg = parse_data(data);
  out.golay_corrected = g;
  out.hamming_corrected = h;
  return out;
}

std::string to_hex(std::span<const std::uint8_t> bits) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < bits.size(); i += 4) {
    unsigned v = 0;
    for (std::size_t k = 0; k < 4; ++k) v = (v << 1) | (i + k < bits.size() ? (bits[i + k] & 1u) : 0u);
    s.push_back(digits[v]);
  }
  return s;
}

// --- Burst -------------------------------------------------------------------

const CVec& sync_preamble() {
  static const CVec p = [] {
    const auto seq = gen_mls(9, default_mls_taps(9));
    CVec v;
    v.reserve(kSyncPreambleLen);
    for (int c : seq) v.emplace_back(static_cast<double>(c), 0.0);
    v.emplace_back(0.0, 0.0);
    return v;
  }();
  return p;
}

ComplexSignal modulate_sync_burst(std::span<const std::uint8_t> coded_bits, double fs_hz) {
  std::vector<std::uint8_t> bits(coded_bits.begin(), coded_bits.end());
  if (bits.size() % 2) bits.push_back(0);
  const auto sym = modulate(bits, Modulation::QPSK).symbols;
  CVec s = sync_preamble();
  s.reserve(s.size() + sym.size() * kSyncSamplesPerSymbol);
  for (const auto& v : sym)
    for (int k = 0; k < kSyncSamplesPerSymbol; ++k) s.push_back(v);
  return {std::move(s), fs_hz};
}

SyncReception demodulate_sync_burst(const ComplexSignal& rx, std::size_t n_bits, double threshold) {
  const CVec& p = sync_preamble();
  const std::size_t np = p.size();
  const std::size_t n_sym = (n_bits + 1) / 2;
  const std::size_t burst = np + n_sym * kSyncSamplesPerSymbol;
  if (rx.size() < burst) throw SyncDecodeError("receive buffer shorter than one burst");
  double p_energy = 0;
  for (const auto& v : p) p_energy += std::norm(v);

  SyncReception best;
  cplx best_corr{};
  const std::size_t last = rx.size() - burst;
  // Sliding window energy for the normalization.
  double win = 0;
  for (std::size_t k = 0; k < np; ++k) win += std::norm(rx[k]);
  for (std::size_t lag = 0; lag <= last; ++lag) {
    if (lag > 0) win += std::norm(rx[lag + np - 1]) - std::norm(rx[lag - 1]);
    cplx c{};
    for (std::size_t k = 0; k + 1 < np; ++k) c += p[k].real() * rx[lag + k];
    const double denom = p_energy * std::max(win, 1e-300);
    const double m = std::norm(c) / denom;
    if (m > best.peak_metric) {
      best.peak_metric = m;
      best.toa_index = lag;
      best_corr = c;
    }
  }
  if (best.peak_metric < threshold) throw SyncDecodeError("preamble not detected");
  const cplx gain = best_corr / p_energy;
  CVec sym(n_sym);
  for (std::size_t k = 0; k < n_sym; ++k) {
    cplx acc{};
    for (int r = 0; r < kSyncSamplesPerSymbol; ++r)
      acc += rx[best.toa_index + np + k * kSyncSamplesPerSymbol + static_cast<std::size_t>(r)];
    sym[k] = acc * std::conj(gain);
  }
  best.bits = demodulate_qpsk(sym);
  best.bits.resize(n_bits);
  return best;
}

std::uint8_t TimestampHistory::push(const Timestamp& t) {
  const auto idx = static_cast<std::uint8_t>(next_);
  slots_[next_] = t;
  next_ = (next_ + 1) % kDepth;
  filled_ = std::min(kDepth, filled_ + 1);
  return idx;
}

const Timestamp& TimestampHistory::at(std::uint8_t index) const {
  if (index >= filled_) throw SyncDecodeError("history index " + std::to_string(index) + " not populated");
  return slots_[index];
}

namespace {

constexpr std::size_t kRxLeadSamples = 64;
constexpr std::size_t kRxTailSamples = 64;

// Receive window opening kRxLeadSamples before the nominal transmit instant.
ComplexSignal receive_window(const ComplexSignal& burst, const ChannelModel& ch, const NoiseSpec& noise, Rng& rng) {
  const ComplexSignal through = apply_channel(burst, ch);
  CVec buf(kRxLeadSamples + through.size() + kRxTailSamples, cplx{});
  for (std::size_t t = 0; t < through.size(); ++t) buf[kRxLeadSamples + t] = through[t];
  return add_noise(ComplexSignal(std::move(buf), burst.sample_rate_hz), noise, rng);
}

}  // namespace

SyncRoundResult run_sync_round(const NodeState& leader, NodeState& follower, const SyncLink& link, Rng& rng,
                               std::uint64_t epoch_samples, TimestampHistory* history) {
  const std::uint64_t fs = link.sample_rate_hz;
  const double fsd = static_cast<double>(fs);
  const auto delta = static_cast<std::int64_t>(
      std::llround((follower.timestamp_offset_s - leader.timestamp_offset_s) * fsd));
  auto follower_clock = [&](std::uint64_t true_samples) {
    return timestamp_from_samples(
        static_cast<std::uint64_t>(static_cast<std::int64_t>(true_samples) - delta), fs);
  };
  auto leader_clock = [&](std::uint64_t true_samples) { return timestamp_from_samples(true_samples, fs); };

  SyncRoundResult res;
  const std::uint64_t t0 = epoch_samples;

  SyncMessage probe;
  probe.kind = SyncKind::FollowerProbe;
  const Timestamp t_tx_n = follower_clock(t0);
  if (link.use_index && history) {
    probe.uses_index = true;
    probe.t_tx_follower = {history->push(t_tx_n), 0};
  } else {
    probe.t_tx_follower = t_tx_n;
  }

  try {
    // Follower -> leader.
    const auto probe_bits = encode_sync_message(probe, link.fec);
    const auto up_rx = receive_window(modulate_sync_burst(probe_bits, fsd), link.up, link.noise, rng);
    const auto up = demodulate_sync_burst(up_rx, probe_bits.size());
    const auto probe_dec = decode_sync_message(up.bits, link.fec);
    res.golay_corrected += probe_dec.golay_corrected;
    res.hamming_corrected += probe_dec.hamming_corrected;
    const Timestamp t_rx_L = leader_clock(t0 - kRxLeadSamples + up.toa_index);

    // Leader -> follower.
    const std::uint64_t t1 = t0 + link.reply_delay_samples;
    SyncMessage reply;
    reply.kind = SyncKind::LeaderReply;
    reply.uses_index = probe_dec.msg.uses_index;
    reply.t_tx_follower = probe_dec.msg.t_tx_follower;
    reply.t_tx_leader = leader_clock(t1);
    reply.t_rx_leader = t_rx_L;
    res.reply_bits = encode_sync_message(reply, link.fec);
    const auto down_rx = receive_window(modulate_sync_burst(res.reply_bits, fsd), link.down, link.noise, rng);
    const auto down = demodulate_sync_burst(down_rx, res.reply_bits.size());
    const auto reply_dec = decode_sync_message(down.bits, link.fec);
    res.golay_corrected += reply_dec.golay_corrected;
    res.hamming_corrected += reply_dec.hamming_corrected;
    const Timestamp t_rx_n = follower_clock(t1 - kRxLeadSamples + down.toa_index);

    const SyncMessage& m = reply_dec.msg;
    if (m.kind != SyncKind::LeaderReply) throw SyncDecodeError("expected a leader reply");
    const Timestamp echoed = m.uses_index ? (history ? history->at(m.index()) : throw SyncDecodeError("no history"))
                                          : m.t_tx_follower;
    res.delta_hat = estimate_offset(echoed, m.t_rx_leader, m.t_tx_leader, t_rx_n);
  } catch (const SyncDecodeError& e) {
    res.ok = false;
    res.failure = e.what();
    res.residual = duration_from_samples(delta, fs);
    return res;
  }
  res.ok = true;
  res.residual = duration_from_samples(delta, fs) - res.delta_hat;
  follower.timestamp_offset_s -= res.delta_hat.to_seconds();
  return res;
}

}  // namespace dcbf
