// SPDX-License-Identifier: Apache-2.0
//
// MLS ambles, QPSK / 256-QAM symbol streams, pulse shaping and the
// receive- and transmit-beamforming frame builders.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dcbf/core.hpp"

namespace dcbf {

/// Polynomial x^m + sum x^k + 1 over GF(2), given by its exponents
/// {m, k1, k2, ...}; the constant term is implied.
using TapSet = std::vector<int>;

/// Shipped primitive polynomial for register lengths 3..14.
TapSet default_mls_taps(int m);

/// The index-th primitive polynomial of degree m in a fixed enumeration order
/// (index 0 is the shipped default). Used to give each node its own code.
TapSet primitive_taps(int m, int index);

/// True when the polynomial generates a sequence of period exactly 2^m - 1.
bool is_primitive(int m, std::span<const int> taps);

/// Maximal-length sequence of length 2^m - 1 mapped to +/-1 (bit 1 -> +1).
/// The register is loaded with a[i] = (seed_state >> i) & 1.
/// Throws std::invalid_argument on a non-primitive polynomial or bad m.
std::vector<int> gen_mls(int m, std::span<const int> taps, std::uint32_t seed_state = 1);

enum class Modulation { QPSK, QAM256 };

int bits_per_symbol(Modulation m);

struct SymbolStream {
  CVec symbols;
  Modulation modulation = Modulation::QPSK;
};

/// Gray-mapped, unit mean power constellation points.
/// QPSK: (b0, b1) -> ((1 - 2 b0) + i (1 - 2 b1)) / sqrt(2).
/// 256-QAM: the first 4 bits select the in-phase level, the last 4 the
/// quadrature level; each nibble is Gray-decoded to an index k and mapped to
/// (2k - 15) / sqrt(170). The all-zero word is the corner (-15 - 15i)/sqrt(170).
SymbolStream modulate(std::span<const std::uint8_t> bits, Modulation m);

/// Hard-decision inverse of modulate() for QPSK.
std::vector<std::uint8_t> demodulate_qpsk(std::span<const cplx> symbols);

inline constexpr int kSamplesPerSymbol = 2;
inline constexpr double kRrcRolloff = 0.35;
inline constexpr int kRrcSpanSymbols = 8;

/// Unit-energy root-raised-cosine taps, length span * sps + 1.
std::vector<double> rrc_taps(double rolloff = kRrcRolloff, int sps = kSamplesPerSymbol,
                             int span_symbols = kRrcSpanSymbols);

/// Upsamples and filters symbols; the output is aligned so symbol k peaks at
/// sample k * sps and has unit mean power for unit-power symbols. The result
/// is truncated or zero-extended to out_len samples.
CVec pulse_shape(std::span<const cplx> symbols, std::size_t out_len);

/// Zero-phase ('same' alignment) RRC matched filter.
ComplexSignal matched_filter(const ComplexSignal& x);

/// QPSK symbols built from a cyclically extended MLS; code selects the
/// polynomial so distinct codes are near-orthogonal.
CVec mls_qpsk_symbols(std::size_t n_symbols, int code, std::uint32_t seed_state = 1);

enum class FrameKind { RX_BF_SOURCE, RX_BF_INTERFERER, TX_BF_NODE };

struct FrameSpec {
  FrameKind kind = FrameKind::RX_BF_SOURCE;
  /// 1-based mesh node index for TX_BF_NODE.
  int node_id = 1;
  std::uint32_t amble_seed = 1;
  std::uint64_t payload_seed = 1;
};

struct Frame {
  ComplexSignal signal;
  FrameLayout layout;
};

/// Layout alone (no sample synthesis). Throws ConfigError on overflow.
FrameLayout frame_layout(FrameKind kind, const MeshConfig& cfg);

/// Synthesizes a frame. Guard, look-through and tail segments, and TDMA slots
/// that belong to other nodes, are exactly zero.
Frame build_frame(const FrameSpec& spec, const MeshConfig& cfg);

/// The clean shaped content of one named segment of a frame.
CVec segment_samples(const Frame& f, std::string_view name);

}  // namespace dcbf
