#include <doctest.h>

#include <cmath>

#include "dcbf/impairments.hpp"
#include "oracles/oracles.hpp"

using namespace dcbf;

namespace {

ComplexSignal random_signal(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  CVec x(n);
  for (auto& v : x) v = rng.complex_normal(1.0);
  return {x, 2e6};
}

double jarque_bera(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double m = 0;
  for (double x : v) m += x;
  m /= n;
  double m2 = 0, m3 = 0, m4 = 0;
  for (double x : v) {
    const double d = x - m;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  const double skew = m3 / std::pow(m2, 1.5);
  const double kurt = m4 / (m2 * m2);
  return n / 6.0 * (skew * skew + (kurt - 3) * (kurt - 3) / 4.0);
}

}  // namespace

TEST_SUITE("impairments") {
  TEST_CASE("identity and pure-delay channels") {
    const auto x = random_signal(32, 1);
    const auto y = apply_channel(x, ChannelModel{});
    CHECK(y.samples == x.samples);

    ChannelModel d{{cplx{0, 0}, cplx{1, 0}}, 3, "delay"};
    const auto z = apply_channel(x, d);
    REQUIRE(z.size() == x.size() + 1 + 3);
    for (std::size_t i = 0; i < 4; ++i) CHECK(z[i] == cplx{});
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(z[i + 4] == x[i]);
  }

  TEST_CASE("channel equals the direct convolution sum") {
    const auto x = random_signal(64, 2);
    const auto h = random_signal(4, 3).samples;
    ChannelModel ch{h, 0, "x"};
    const auto y = apply_channel(x, ch);
    const auto ref = oracle::convolve(x.samples, h);
    REQUIRE(y.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-14);
  }

  TEST_CASE("channel linearity") {
    const auto x = random_signal(50, 4), y = random_signal(50, 5);
    ChannelModel ch{random_signal(3, 6).samples, 2, ""};
    const cplx a{0.3, -1.1}, b{2.0, 0.5};
    CVec mix(50);
    for (std::size_t i = 0; i < 50; ++i) mix[i] = a * x[i] + b * y[i];
    const auto lhs = apply_channel({mix, 2e6}, ch);
    const auto cx = apply_channel(x, ch), cy = apply_channel(y, ch);
    for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - (a * cx[i] + b * cy[i])) < 1e-13);
  }

  TEST_CASE("invalid channels are rejected") {
    CHECK_THROWS_AS(ChannelModel({}, 0, "").check(), std::invalid_argument);
    CHECK_THROWS_AS(ChannelModel({cplx{}, cplx{}}, 0, "").check(), std::invalid_argument);
  }

  TEST_CASE("ideal clock holds phase") {
    NodeState n(1, 1);
    n.phase_rad = 0.7;
    advance_clock(n, 3.0);
    CHECK(n.phase_rad == 0.7);
  }

  TEST_CASE("CFO rotation over 10 ms at 100 Hz is one full turn") {
    NodeState n(1, 1);
    n.cfo_hz = 100;
    advance_clock(n, 0.01);
    CHECK(n.phase_rad == doctest::Approx(kTwoPi).epsilon(1e-12));
    CHECK(std::min(n.wrapped_phase(), kTwoPi - n.wrapped_phase()) < 1e-9);
  }

  TEST_CASE("walk increments have variance v dt") {
    NodeState n(2, 77);
    n.phase_walk_var_per_s = 0.5;
    const double dt = 0.01;
    std::vector<double> inc;
    for (int k = 0; k < 10000; ++k) {
      const double before = n.phase_rad;
      advance_clock(n, dt);
      inc.push_back(n.phase_rad - before);
    }
    double m = 0, s = 0;
    for (double d : inc) m += d;
    m /= inc.size();
    for (double d : inc) s += (d - m) * (d - m);
    s /= (inc.size() - 1);
    CHECK(s == doctest::Approx(0.5 * dt).epsilon(0.05));
  }

  TEST_CASE("ideal node leaves the signal unchanged") {
    const auto x = random_signal(100, 8);
    NodeState n(1, 1);
    const auto y = apply_node_imperfections(x, n);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - x[i]) < 1e-15);
  }

  TEST_CASE("pure CFO turns a constant into a tone at that frequency") {
    const std::size_t L = 1000;
    ComplexSignal ones(CVec(L, cplx{1, 0}), 2e6);
    NodeState n(1, 1);
    n.cfo_hz = 6000;  // bin 3 of a 1000-point DFT at 2 MHz
    const auto y = apply_node_imperfections(ones, n);
    std::size_t best = 0;
    double bestv = 0;
    for (std::size_t k = 0; k < L; ++k) {
      cplx acc{};
      for (std::size_t t = 0; t < L; ++t) acc += y[t] * std::polar(1.0, -kTwoPi * k * t / L);
      if (std::abs(acc) > bestv) {
        bestv = std::abs(acc);
        best = k;
      }
    }
    CHECK(best == 3);
    CHECK(n.phase_rad == doctest::Approx(kTwoPi * 6000 * L / 2e6));
  }

  TEST_CASE("phase difference of two walking nodes grows like sqrt(t)") {
    const double v = 2.0;
    const std::vector<double> times{0.01, 0.04, 0.16};
    std::vector<double> rms(times.size(), 0.0);
    for (int trial = 0; trial < 200; ++trial) {
      NodeState a(1, 1000 + trial), b(2, 1000 + trial);
      a.phase_walk_var_per_s = b.phase_walk_var_per_s = v;
      double t = 0;
      for (std::size_t i = 0; i < times.size(); ++i) {
        advance_clock(a, times[i] - t);
        advance_clock(b, times[i] - t);
        t = times[i];
        const double d = a.phase_rad - b.phase_rad;
        rms[i] += d * d;
      }
    }
    for (auto& r : rms) r = std::sqrt(r / 200);
    // Each 4x in time should double the RMS.
    CHECK(rms[1] / rms[0] == doctest::Approx(2.0).epsilon(0.25));
    CHECK(rms[2] / rms[1] == doctest::Approx(2.0).epsilon(0.25));
    CHECK(rms[2] == doctest::Approx(std::sqrt(2 * v * 0.16)).epsilon(0.15));
  }

  TEST_CASE("per-cycle jitter is a constant phase over the signal") {
    const auto x = random_signal(64, 9);
    NodeState n(1, 1);
    n.cycle_jitter_rad = 0.3;
    const auto y = apply_node_imperfections(x, n);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - x[i] * std::polar(1.0, 0.3)) < 1e-14);
    CHECK(n.phase_rad == 0.0);
  }

  TEST_CASE("channel then LO differs from LO then channel when T_h > 1") {
    ComplexSignal x(CVec{{1, 0}, {0, 0}, {0, 0}, {0, 0}}, 2e6);
    ChannelModel ch{{cplx{1, 0}, cplx{0.5, 0}}, 0, ""};
    NodeState a(1, 1), b(1, 1);
    a.cfo_hz = b.cfo_hz = 500e3;  // quarter turn per sample
    const auto chan_first = apply_node_imperfections(apply_channel(x, ch), a);
    auto lo_first = apply_channel(apply_node_imperfections(x, b), ch);
    // Regression vector for the simulator's order (channel first): the tap at
    // t = 1 carries the sample-1 LO rotation i.
    CHECK(std::abs(chan_first[0] - cplx{1, 0}) < 1e-12);
    CHECK(std::abs(chan_first[1] - cplx{0, 0.5}) < 1e-12);
    CHECK(std::abs(lo_first[1] - cplx{0.5, 0}) < 1e-12);
  }

  TEST_CASE("noise power and Gaussianity") {
    Rng rng(12);
    CHECK(add_noise(random_signal(10, 1), NoiseSpec{0.0}, rng).samples == random_signal(10, 1).samples);
    const auto n = add_noise(ComplexSignal(CVec(100000), 2e6), NoiseSpec{1.0}, rng);
    CHECK(n.power() == doctest::Approx(1.0).epsilon(0.02));
    std::vector<double> re, im;
    double vre = 0;
    for (const auto& v : n.samples) {
      re.push_back(v.real());
      im.push_back(v.imag());
      vre += v.real() * v.real();
    }
    CHECK(vre / n.size() == doctest::Approx(0.5).epsilon(0.02));
    CHECK(jarque_bera(re) < 13.8);
    CHECK(jarque_bera(im) < 13.8);
  }

  TEST_CASE("perturbation and superposition") {
    Rng rng(3);
    ChannelModel ch{{cplx{1, 0}}, 0, ""};
    perturb_channel(ch, 0.0, rng);
    CHECK(ch.taps[0] == cplx{1, 0});
    perturb_channel(ch, 0.01, rng);
    CHECK(ch.taps[0] != cplx{1, 0});
    CHECK(std::abs(ch.taps[0] - cplx{1, 0}) < 0.5);

    std::vector<ComplexSignal> parts{ComplexSignal(CVec{{1, 0}}, 2e6), ComplexSignal(CVec{{1, 0}, {2, 0}}, 2e6)};
    const auto s = superpose(parts);
    REQUIRE(s.size() == 2);
    CHECK(s[0] == cplx{2, 0});
    CHECK(s[1] == cplx{2, 0});
  }
}
