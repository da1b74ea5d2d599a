// SPDX-License-Identifier: Apache-2.0
//
// Leader-follower RF time transfer: 64.64 fixed-point timestamps, the
// Golay / Hamming coded timestamp message, and two-way offset estimation.

#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcbf/core.hpp"
#include "dcbf/impairments.hpp"

namespace dcbf {

using i128 = __int128;
using u128 = unsigned __int128;

/// Unsigned 64.64 fixed-point time in seconds.
struct Timestamp {
  std::uint64_t integer_part = 0;
  std::uint64_t frac_part = 0;

  u128 raw() const { return (static_cast<u128>(integer_part) << 64) | frac_part; }
  static Timestamp from_raw(u128 v) { return {static_cast<std::uint64_t>(v >> 64), static_cast<std::uint64_t>(v)}; }
  double to_seconds() const;
  friend bool operator==(const Timestamp&, const Timestamp&) = default;
  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

/// Signed 64.64 fixed-point duration: seconds + frac / 2^64, frac in [0, 2^64).
struct SignedDuration {
  std::int64_t seconds = 0;
  std::uint64_t frac = 0;

  i128 raw() const { return (static_cast<i128>(seconds) * (static_cast<i128>(1) << 64)) + static_cast<i128>(frac); }
  static SignedDuration from_raw(i128 v);
  double to_seconds() const;
  friend bool operator==(const SignedDuration&, const SignedDuration&) = default;
};

/// Exact floor(samples / fs) as a timestamp; fs must be a positive integer rate.
Timestamp timestamp_from_samples(std::uint64_t samples, std::uint64_t fs_hz);
SignedDuration duration_from_samples(std::int64_t samples, std::uint64_t fs_hz);
SignedDuration operator-(const Timestamp& a, const Timestamp& b);
SignedDuration operator-(const SignedDuration& a, const SignedDuration& b);
Timestamp operator+(const Timestamp& t, const SignedDuration& d);

/// delta = ((t_rx_L - t_tx_n) - (t_rx_n - t_tx_L)) / 2, with the integer and
/// fractional components accumulated separately before the final halving
/// (which rounds toward negative infinity by one 2^-65 s step when odd).
SignedDuration estimate_offset(const Timestamp& t_tx_n, const Timestamp& t_rx_L, const Timestamp& t_tx_L,
                               const Timestamp& t_rx_n);

// --- Forward error correction ---------------------------------------------

/// Extended Golay(24,12), systematic: codeword = data << 12 | parity.
std::uint32_t golay_encode(std::uint16_t data12);

struct GolayDecoded {
  std::uint16_t data = 0;
  int corrected_errors = 0;
};

/// Corrects up to 3 bit errors. Returns nullopt on a detected pattern of
/// 4 errors (or any word outside the radius-3 spheres).
std::optional<GolayDecoded> golay_decode(std::uint32_t word24);

/// Hamming(7,4). Codeword bit (p - 1) holds position p of p1 p2 d1 p3 d2 d3 d4,
/// with d1 the most significant data bit.
std::uint8_t hamming_encode(std::uint8_t data4);

struct HammingDecoded {
  std::uint8_t data = 0;
  int corrected = 0;
};

/// Single-error correcting; double errors miscorrect silently.
HammingDecoded hamming_decode(std::uint8_t word7);

// --- Timestamp messages -----------------------------------------------------

enum class SyncKind : std::uint8_t { FollowerProbe = 1, LeaderReply = 2 };

struct SyncMessage {
  SyncKind kind = SyncKind::FollowerProbe;
  /// When set, t_tx_follower carries a history index in its integer part.
  bool uses_index = false;
  Timestamp t_tx_follower;
  Timestamp t_tx_leader;
  Timestamp t_rx_leader;

  std::uint8_t index() const { return static_cast<std::uint8_t>(t_tx_follower.integer_part); }
  friend bool operator==(const SyncMessage&, const SyncMessage&) = default;
};

class SyncDecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FecMode { HammingGolay, None };

/// Header byte: kind in the low nibble, bit 4 = index flag. Each timestamp field
/// is 128 bits, integer then fraction, big-endian. Data bits are Hamming(7,4)
/// coded nibble by nibble, zero-padded to a multiple of 12 and Golay coded.
std::size_t sync_data_bits(SyncKind kind);
std::vector<std::uint8_t> sync_data_bits(const SyncMessage& msg);
std::vector<std::uint8_t> encode_sync_message(const SyncMessage& msg, FecMode fec = FecMode::HammingGolay);

struct DecodedSync {
  SyncMessage msg;
  int golay_corrected = 0;
  int hamming_corrected = 0;
};

/// Throws SyncDecodeError on an unknown header, truncated input, or Golay failure.
DecodedSync decode_sync_message(std::span<const std::uint8_t> bits, FecMode fec = FecMode::HammingGolay);

std::string to_hex(std::span<const std::uint8_t> bits);

// --- Burst level -------------------------------------------------------------

inline constexpr std::size_t kSyncPreambleLen = 512;
inline constexpr int kSyncSamplesPerSymbol = 2;

/// 511-chip MLS (m = 9) as real +/-1 samples followed by one zero pad sample.
const CVec& sync_preamble();

/// [preamble | QPSK symbols held for 2 samples each]. Odd bit counts get a zero pad bit.
ComplexSignal modulate_sync_burst(std::span<const std::uint8_t> coded_bits, double fs_hz);

struct SyncReception {
  std::size_t toa_index = 0;
  double peak_metric = 0.0;
  std::vector<std::uint8_t> bits;
};

/// Locates the preamble by normalized cross-correlation peak, corrects the
/// burst's complex gain from the preamble, and slices n_bits QPSK bits.
/// Throws SyncDecodeError when the peak is below threshold.
SyncReception demodulate_sync_burst(const ComplexSignal& rx, std::size_t n_bits, double threshold = 0.1);

/// Bounded history of follower transmit timestamps for index compression.
class TimestampHistory {
 public:
  static constexpr std::size_t kDepth = 256;
  /// Stores t and returns its index.
  std::uint8_t push(const Timestamp& t);
  const Timestamp& at(std::uint8_t index) const;

 private:
  std::vector<Timestamp> slots_ = std::vector<Timestamp>(kDepth);
  std::size_t next_ = 0;
  std::size_t filled_ = 0;
};

struct SyncLink {
  ChannelModel up;    // follower -> leader
  ChannelModel down;  // leader -> follower
  NoiseSpec noise;
  std::uint64_t sample_rate_hz = 2'000'000;
  /// Leader turnaround between probe and reply, samples.
  std::uint64_t reply_delay_samples = 20'000;
  bool use_index = false;
  FecMode fec = FecMode::HammingGolay;
};

struct SyncRoundResult {
  bool ok = false;
  std::string failure;
  SignedDuration delta_hat;
  /// delta_true - delta_hat, exact.
  SignedDuration residual;
  int golay_corrected = 0;
  int hamming_corrected = 0;
  std::vector<std::uint8_t> reply_bits;
};

/// One two-way exchange at a given true epoch (leader time, samples). The
/// follower's timestamp_offset_s is the amount the leader runs ahead of it,
/// quantized to the sample grid; on success it is reduced by delta_hat.
SyncRoundResult run_sync_round(const NodeState& leader, NodeState& follower, const SyncLink& link, Rng& rng,
                               std::uint64_t epoch_samples = 3'400'000'000'000ULL,
                               TimestampHistory* history = nullptr);

}  // namespace dcbf
