#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dcbf/waveform.hpp"
#include "oracles/oracles.hpp"

using namespace dcbf;

namespace {

bool all_zero(const Frame& f, const Segment& s) {
  for (std::size_t i = s.offset; i < s.end(); ++i)
    if (f.signal[i] != cplx{}) return false;
  return true;
}

double segment_energy(const Frame& f, const Segment& s) {
  double e = 0;
  for (std::size_t i = s.offset; i < s.end(); ++i) e += std::norm(f.signal[i]);
  return e;
}

}  // namespace

TEST_SUITE("waveform") {
  TEST_CASE("m=3 sequence has ideal two-valued circular autocorrelation") {
    const auto a = gen_mls(3, TapSet{3, 1}, 1);
    REQUIRE(a.size() == 7);
    for (std::size_t lag = 0; lag < 7; ++lag) {
      int r = 0;
      for (std::size_t t = 0; t < 7; ++t) r += a[t] * a[(t + lag) % 7];
      CHECK(r == (lag == 0 ? 7 : -1));
    }
  }

  TEST_CASE("balance and length for all shipped registers") {
    for (int m = 3; m <= 14; ++m) {
      const auto a = gen_mls(m, default_mls_taps(m));
      CAPTURE(m);
      REQUIRE(a.size() == (1u << m) - 1);
      const auto ones = std::count(a.begin(), a.end(), 1);
      CHECK(ones == (1 << (m - 1)));
      CHECK(static_cast<long>(a.size()) - ones == (1 << (m - 1)) - 1);
    }
    CHECK(gen_mls(9, default_mls_taps(9)).size() == 511);
  }

  TEST_CASE("non-primitive polynomials and bad registers are rejected") {
    CHECK_FALSE(is_primitive(4, TapSet{4, 2}));
    CHECK_THROWS_AS(gen_mls(4, TapSet{4, 2}), std::invalid_argument);
    CHECK_THROWS(gen_mls(2, TapSet{2, 1}));
    CHECK_THROWS(gen_mls(20, TapSet{20, 3}));
  }

  TEST_CASE("enumerated polynomials are distinct and primitive") {
    const auto p0 = primitive_taps(13, 0);
    const auto p1 = primitive_taps(13, 1);
    const auto p2 = primitive_taps(13, 2);
    CHECK(p0 == default_mls_taps(13));
    CHECK(p0 != p1);
    CHECK(p1 != p2);
    CHECK(is_primitive(13, p1));
    CHECK(is_primitive(13, p2));
  }

  TEST_CASE("QPSK Gray map") {
    const std::vector<std::uint8_t> bits{0, 0, 0, 1, 1, 1, 1, 0};
    const auto s = modulate(bits, Modulation::QPSK);
    REQUIRE(s.symbols.size() == 4);
    const double r = 1 / std::sqrt(2.0);
    CHECK(std::abs(s.symbols[0] - cplx{r, r}) < 1e-15);
    CHECK(std::abs(s.symbols[1] - cplx{r, -r}) < 1e-15);
    CHECK(std::abs(s.symbols[2] - cplx{-r, -r}) < 1e-15);
    CHECK(std::abs(s.symbols[3] - cplx{-r, r}) < 1e-15);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(std::abs(s.symbols[i]) == doctest::Approx(1.0));
      for (std::size_t j = i + 1; j < 4; ++j) {
        const double d = std::arg(s.symbols[i] / s.symbols[j]) / (kPi / 2);
        CHECK(std::abs(d - std::round(d)) < 1e-12);
      }
    }
    CHECK(demodulate_qpsk(s.symbols) == bits);
  }

  TEST_CASE("256-QAM corner point and unit power") {
    const std::vector<std::uint8_t> zero(8, 0);
    const auto s = modulate(zero, Modulation::QAM256);
    REQUIRE(s.symbols.size() == 1);
    CHECK(std::abs(s.symbols[0] - cplx{-15, -15} / std::sqrt(170.0)) < 1e-15);
    // Every one of the 256 words once gives exactly unit mean power.
    std::vector<std::uint8_t> all;
    for (int w = 0; w < 256; ++w)
      for (int b = 7; b >= 0; --b) all.push_back(static_cast<std::uint8_t>((w >> b) & 1));
    const auto q = modulate(all, Modulation::QAM256);
    CHECK(mean_power(q.symbols) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("modulate rejects partial symbols") {
    CHECK_THROWS(modulate(std::vector<std::uint8_t>{1, 0, 1}, Modulation::QPSK));
    CHECK_THROWS(modulate(std::vector<std::uint8_t>(12, 0), Modulation::QAM256));
  }

  TEST_CASE("random QPSK stream power") {
    Rng rng(11);
    std::vector<std::uint8_t> bits(20000);
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng.bit());
    CHECK(mean_power(modulate(bits, Modulation::QPSK).symbols) == doctest::Approx(1.0).epsilon(0.01));
  }

  TEST_CASE("RRC taps have unit energy and symmetry") {
    const auto g = rrc_taps();
    REQUIRE(g.size() == kRrcSpanSymbols * kSamplesPerSymbol + 1);
    double e = 0;
    for (double v : g) e += v * v;
    CHECK(e == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(g[g.size() - 1 - i]));
  }

  TEST_CASE("pulse shaping keeps unit power and exact length") {
    const auto sym = mls_qpsk_symbols(4096, 0);
    const auto x = pulse_shape(sym, 8192);
    REQUIRE(x.size() == 8192);
    CHECK(mean_power(x) == doctest::Approx(1.0).epsilon(0.03));
  }

  TEST_CASE("default RX source frame layout") {
    MeshConfig cfg;
    const auto f = build_frame({FrameKind::RX_BF_SOURCE, 1, 1, 1}, cfg);
    CHECK(f.layout.total_length == 75560);
    CHECK(f.signal.size() == 75560);
    CHECK_NOTHROW(f.layout.check());
    const auto& lt = f.layout.at("lookthrough");
    CHECK(lt.length > 0);
    CHECK(all_zero(f, lt));
    CHECK(f.layout.at("preamble").length == 8192);
    CHECK(f.layout.at("payload").length == 8192);
    CHECK(f.layout.at("postamble").length == 8192);
    CHECK(f.layout.at("preamble").offset == 0);
    CHECK(f.layout.at("payload").offset == 8192 + 256);
  }

  TEST_CASE("guards are exactly guard_len zeros in every frame kind") {
    MeshConfig cfg;
    for (FrameKind k : {FrameKind::RX_BF_SOURCE, FrameKind::TX_BF_NODE}) {
      const auto f = build_frame({k, 2, 1, 9}, cfg);
      int guards = 0;
      for (const auto& s : f.layout.segments) {
        if (s.name.rfind("guard", 0) != 0) continue;
        ++guards;
        CHECK(s.length == 256);
        CHECK(all_zero(f, s));
      }
      CHECK(guards >= 3);
    }
  }

  TEST_CASE("TX node frame uses only its own TDMA slots") {
    MeshConfig cfg;
    const auto f = build_frame({FrameKind::TX_BF_NODE, 2, 1, 1}, cfg);
    CHECK(f.layout.total_length == 91472);
    CHECK(f.signal.size() == 91472);
    CHECK(segment_energy(f, f.layout.at("monitor_2")) > 0);
    CHECK(all_zero(f, f.layout.at("monitor_1")));
    CHECK(all_zero(f, f.layout.at("monitor_3")));
    CHECK(segment_energy(f, f.layout.at("postamble_2")) > 0);
    CHECK(all_zero(f, f.layout.at("postamble_1")));
    CHECK(all_zero(f, f.layout.at("postamble_3")));
    CHECK(all_zero(f, f.layout.at("tail")));
  }

  TEST_CASE("interferer covers the whole frame") {
    MeshConfig cfg;
    const auto f = build_frame({FrameKind::RX_BF_INTERFERER, 1, 1, 4}, cfg);
    CHECK(f.signal.size() == 75560);
    CHECK(f.signal.power() == doctest::Approx(1.0).epsilon(0.05));
  }

  TEST_CASE("CDMA preambles are near-orthogonal") {
    MeshConfig cfg;
    std::vector<CVec> pre;
    for (int n = 1; n <= 3; ++n) pre.push_back(segment_samples(build_frame({FrameKind::TX_BF_NODE, n, 1, 1}, cfg), "preamble"));
    auto ncc = [](const CVec& a, const CVec& b) {
      double best = 0;
      const double ea = std::sqrt(mean_power(a) * a.size()), eb = std::sqrt(mean_power(b) * b.size());
      for (long lag = -64; lag <= 64; ++lag) {
        cplx acc{};
        for (std::size_t t = 0; t < a.size(); ++t) {
          const long u = static_cast<long>(t) + lag;
          if (u >= 0 && u < static_cast<long>(b.size())) acc += a[t] * std::conj(b[static_cast<std::size_t>(u)]);
        }
        best = std::max(best, std::abs(acc) / (ea * eb));
      }
      return best;
    };
    CHECK(ncc(pre[0], pre[0]) == doctest::Approx(1.0));
    CHECK(ncc(pre[0], pre[1]) <= 0.2);
    CHECK(ncc(pre[0], pre[2]) <= 0.2);
    CHECK(ncc(pre[1], pre[2]) <= 0.2);
  }

  TEST_CASE("segments round-trip through the layout") {
    MeshConfig cfg;
    const auto f = build_frame({FrameKind::RX_BF_SOURCE, 1, 1, 1}, cfg);
    const auto pre = segment_samples(f, "preamble");
    const auto post = segment_samples(f, "postamble");
    const auto& s = f.layout.at("payload");
    const auto pay = segment_samples(f, "payload");
    CHECK(pre == post);
    CHECK(std::equal(pay.begin(), pay.end(), f.signal.samples.begin() + static_cast<long>(s.offset)));
  }

  TEST_CASE("payloads change with the payload seed, ambles do not") {
    MeshConfig cfg;
    const auto a = build_frame({FrameKind::RX_BF_SOURCE, 1, 1, 1}, cfg);
    const auto b = build_frame({FrameKind::RX_BF_SOURCE, 1, 1, 2}, cfg);
    CHECK(segment_samples(a, "preamble") == segment_samples(b, "preamble"));
    CHECK(segment_samples(a, "payload") != segment_samples(b, "payload"));
  }

  TEST_CASE("layout overflow is a config error") {
    MeshConfig cfg;
    cfg.rx_frame_len = 20000;
    CHECK_THROWS_AS(frame_layout(FrameKind::RX_BF_SOURCE, cfg), ConfigError);
    cfg = MeshConfig{};
    cfg.n_nodes = 5;
    CHECK_THROWS_AS(frame_layout(FrameKind::TX_BF_NODE, cfg), ConfigError);
  }

  TEST_CASE("matched filter of shaped symbols samples back to the symbols") {
    const auto sym = mls_qpsk_symbols(512, 1);
    ComplexSignal x(pulse_shape(sym, 1024), 2e6);
    const auto y = matched_filter(x);
    REQUIRE(y.size() == x.size());
    // Away from the edges each symbol-spaced sample is a scaled copy of its symbol.
    const cplx ratio = y[200] / sym[100];
    for (std::size_t k = 20; k < 490; ++k) CHECK(std::abs(y[2 * k] - ratio * sym[k]) < 0.05 * std::abs(ratio));
  }
}
