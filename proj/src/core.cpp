// SPDX-License-Identifier: Apache-2.0

#include "dcbf/core.hpp"

#include <algorithm>
#include <cmath>

namespace dcbf {

double mean_power(std::span<const cplx> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& v : x) acc += std::norm(v);
  return acc / static_cast<double>(x.size());
}

double ComplexSignal::power() const { return mean_power(samples); }

bool ComplexSignal::all_finite() const {
  return std::all_of(samples.begin(), samples.end(),
                     [](const cplx& v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); });
}

ComplexSignal ComplexSignal::slice(std::size_t offset, std::size_t length) const {
  CVec out(length, cplx{});
  for (std::size_t i = 0; i < length && offset + i < samples.size(); ++i) out[i] = samples[offset + i];
  return {std::move(out), sample_rate_hz};
}

void FrameLayout::append(std::string name, std::size_t length) {
  const std::size_t off = segments.empty() ? 0 : segments.back().end();
  segments.push_back({std::move(name), off, length});
}

const Segment* FrameLayout::find(std::string_view name) const {
  for (const auto& s : segments)
    if (s.name == name) return &s;
  return nullptr;
}

const Segment& FrameLayout::at(std::string_view name) const {
  const Segment* s = find(name);
  if (!s) throw std::out_of_range("no segment named '" + std::string(name) + "'");
  return *s;
}

std::size_t FrameLayout::used_length() const { return segments.empty() ? 0 : segments.back().end(); }

void FrameLayout::check() const {
  std::size_t cursor = 0;
  for (const auto& s : segments) {
    if (s.offset < cursor) throw std::logic_error("segment '" + s.name + "' overlaps its predecessor");
    if (s.end() > total_length)
      throw std::logic_error("segment '" + s.name + "' exceeds frame length " + std::to_string(total_length));
    cursor = s.end();
  }
}

MeshConfig validate_config(const MeshConfig& cfg) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (cfg.n_nodes < 1) fail("n_nodes must be ≥ 1");
  if (!(cfg.sample_rate_hz > 0)) fail("sample_rate_hz must be > 0");
  if (!(cfg.bandwidth_hz > 0)) fail("bandwidth_hz must be > 0");
  if (cfg.bandwidth_hz > cfg.sample_rate_hz) fail("bandwidth_hz must not exceed sample_rate_hz");
  if (!(cfg.carrier_hz > 0)) fail("carrier_hz must be > 0");
  if (!(cfg.cycle_period_s > 0)) fail("cycle_period_s must be > 0");
  if (cfg.amble_len == 0) fail("amble_len must be > 0");
  if (cfg.payload_len == 0) fail("payload_len must be > 0");
  if (cfg.est_integration_len == 0) fail("est_integration_len must be > 0");
  if (cfg.guard_len == 0) fail("guard_len must be > 0");
  if (cfg.rx_frame_len == 0) fail("rx_frame_len must be > 0");
  if (cfg.tx_frame_len == 0) fail("tx_frame_len must be > 0");
  if (!(cfg.diag_loading_eps >= 0) || !std::isfinite(cfg.diag_loading_eps))
    fail("diag_loading_eps must be a finite value ≥ 0");
  return cfg;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t node_id, std::string_view purpose) {
  return splitmix64(splitmix64(splitmix64(master) ^ node_id) ^ fnv1a64(purpose));
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(kTwoPi * u2);
  return r * std::cos(kTwoPi * u2);
}

cplx Rng::complex_normal(double power) {
  const double s = std::sqrt(power / 2.0);
  const double re = normal();
  const double im = normal();
  return {s * re, s * im};
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do v = engine_();
  while (v >= limit);
  return v % n;
}

double NodeState::wrapped_phase() const {
  double p = std::fmod(phase_rad, kTwoPi);
  if (p < 0) p += kTwoPi;
  return p;
}

}  // namespace dcbf
