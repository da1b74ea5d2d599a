#include <doctest.h>

#include <cmath>

#include "dcbf/beamform.hpp"
#include "dcbf/waveform.hpp"
#include "oracles/oracles.hpp"

using namespace dcbf;

namespace {

constexpr double kFs = 2e6;

CVec random_cvec(std::size_t n, Rng& rng, double power = 1.0) {
  CVec v(n);
  for (auto& x : v) x = rng.complex_normal(power);
  return v;
}

// Gaussian integers in [-4, 4]: every product and partial sum below is exact.
CVec integer_cvec(std::size_t n, Rng& rng) {
  CVec v(n);
  for (auto& x : v) x = {static_cast<double>(rng.below(9)) - 4.0, static_cast<double>(rng.below(9)) - 4.0};
  return v;
}

Eigen::VectorXcd stack_weights(const Beamformer& bf) {
  Eigen::VectorXcd w(static_cast<Eigen::Index>(bf.n_nodes() * bf.filter_taps()));
  Eigen::Index i = 0;
  for (const auto& wn : bf.weights)
    for (const auto& v : wn) w(i++) = v;
  return w;
}

double interference_output(const CVec& w, const CVec& g) {
  cplx acc{};
  for (std::size_t n = 0; n < w.size(); ++n) acc += g[n] * std::conj(w[n]);
  return std::norm(acc);
}

}  // namespace

TEST_SUITE("beamform") {
  TEST_CASE("delay matrix structure") {
    ComplexSignal z(CVec{{9, 0}, {1, 0}, {2, 0}, {3, 0}}, kFs);
    const auto m = build_delay_matrix(z, 1, 3, 2);
    REQUIRE(m.filter_taps() == 2);
    REQUIRE(m.columns() == 4);
    Eigen::MatrixXcd expect(2, 4);
    expect << 1, 2, 3, 0, 0, 1, 2, 3;
    CHECK(m.data.isApprox(expect));
    const auto one = build_delay_matrix(z, 0, 4, 1);
    for (Eigen::Index c = 0; c < 4; ++c) CHECK(one.data(0, c) == z[static_cast<std::size_t>(c)]);
    CHECK_THROWS(build_delay_matrix(z, 2, 3, 1));
    CHECK_THROWS(build_delay_matrix(z, 0, 2, 0));
  }

  TEST_CASE("w^H Z equals direct convolution exactly") {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
      const auto window = integer_cvec(64, rng);
      const auto w = integer_cvec(5, rng);
      const auto m = build_delay_matrix({window, kFs}, 0, 64, 5);
      Eigen::VectorXcd wv(5);
      for (int i = 0; i < 5; ++i) wv(i) = w[static_cast<std::size_t>(i)];
      const Eigen::RowVectorXcd y = wv.adjoint() * m.data;
      CVec wc(5);
      for (int i = 0; i < 5; ++i) wc[static_cast<std::size_t>(i)] = std::conj(w[static_cast<std::size_t>(i)]);
      const auto ref = oracle::convolve(window, wc);
      REQUIRE(static_cast<std::size_t>(y.size()) == ref.size());
      for (std::size_t c = 0; c < ref.size(); ++c) CHECK(y(static_cast<Eigen::Index>(c)) == ref[c]);
    }
  }

  TEST_CASE("training row centering") {
    const CVec s{{1, 0}, {2, 0}};
    const auto r = training_row(s, 4);
    REQUIRE(r.size() == 5);
    CHECK(r(0) == cplx{});
    CHECK(r(1) == cplx{});
    CHECK(r(2) == cplx{1, 0});
    CHECK(r(3) == cplx{2, 0});
    CHECK(r(4) == cplx{});
  }

  TEST_CASE("scalar MMSE inverts the channel") {
    Rng rng(2);
    const auto s = random_cvec(128, rng);
    const cplx h{0.6, -1.3};
    CVec z(128);
    for (std::size_t t = 0; t < 128; ++t) z[t] = h * s[t];
    const auto m = build_delay_matrix({z, kFs}, 0, 128, 1);
    MmseOptions o;
    o.loading = 0.0;
    const auto bf = mmse_rx_beamformer(m.data, training_row(s, 1), 1, o);
    CHECK(std::abs(bf.weights[0][0] - h / std::norm(h)) < 1e-12);
    const auto out = apply_rx_beamformer(bf, std::vector<ComplexSignal>{{z, kFs}}, 0);
    for (std::size_t t = 0; t < 128; ++t) CHECK(std::abs(out[t] - s[t]) < 1e-12);
  }

  TEST_CASE("two equal-gain nodes with white noise covariance double the SNR") {
    Rng rng(3);
    const auto s = random_cvec(256, rng);
    const CVec h{std::polar(1.0, 0.4), std::polar(1.0, -2.0)};
    std::vector<DelayMatrix> per;
    for (std::size_t n = 0; n < 2; ++n) {
      CVec z(256);
      for (std::size_t t = 0; t < 256; ++t) z[t] = h[n] * s[t];
      per.push_back(build_delay_matrix({z, kFs}, 0, 256, 1));
    }
    const double sigma2 = 0.1;
    const Eigen::MatrixXcd noise = std::sqrt(sigma2) * Eigen::MatrixXcd::Identity(2, 2);
    MmseOptions o;
    o.source = CovarianceSource::INTERFERENCE_ONLY;
    o.interference_only = &noise;
    o.loading = 0.0;
    const auto bf = mmse_rx_beamformer(stack_delay_matrices(per), training_row(s, 1), 2, o);
    const cplx ratio = bf.weights[0][0] / h[0];
    CHECK(std::abs(bf.weights[1][0] - ratio * h[1]) < 1e-12 * std::abs(ratio));
    const double sig = interference_output({bf.weights[0][0], bf.weights[1][0]}, h);
    const double noise_out = sigma2 * (std::norm(bf.weights[0][0]) + std::norm(bf.weights[1][0]));
    CHECK(sig / noise_out == doctest::Approx(2.0 / sigma2).epsilon(1e-12));
  }

  TEST_CASE("MMSE weights match the dense normal-equation oracle") {
    Rng rng(4);
    for (int inst = 0; inst < 50; ++inst) {
      const std::size_t N = 1 + rng.below(3), Tw = 1 + rng.below(8), Tz = 64 + rng.below(193);
      std::vector<DelayMatrix> per;
      for (std::size_t n = 0; n < N; ++n) per.push_back(build_delay_matrix({random_cvec(Tz, rng), kFs}, 0, Tz, Tw));
      const auto Z = stack_delay_matrices(per);
      const auto s = training_row(random_cvec(Tz, rng), Tw);
      const auto bf = mmse_rx_beamformer(Z, s, N);
      const auto ref = oracle::dense_mmse(Z, s, bf.loading);
      const auto w = stack_weights(bf);
      CAPTURE(inst);
      CHECK((w - ref).norm() / ref.norm() <= 1e-8);
      CHECK(bf.loading == doctest::Approx(1e-3 * (Z * Z.adjoint()).trace().real() / static_cast<double>(N * Tw)));
    }
  }

  TEST_CASE("beamformer output equals the matrix path") {
    Rng rng(5);
    const std::size_t N = 3, Tw = 5, Tz = 100, tau = 7;
    std::vector<ComplexSignal> z;
    std::vector<DelayMatrix> per;
    for (std::size_t n = 0; n < N; ++n) {
      z.emplace_back(random_cvec(tau + Tz + 10, rng), kFs);
      per.push_back(build_delay_matrix(z.back(), tau, Tz, Tw));
    }
    Beamformer bf;
    bf.center_delay = 2;
    for (std::size_t n = 0; n < N; ++n) bf.weights.push_back(random_cvec(Tw, rng));
    const Eigen::RowVectorXcd y = stack_weights(bf).adjoint() * stack_delay_matrices(per);
    const auto out = apply_rx_beamformer(bf, z, tau);
    for (std::size_t col = Tw - 1; col < Tz; ++col)
      CHECK(std::abs(out[col - bf.center_delay] - y(static_cast<Eigen::Index>(col))) < 1e-12);
  }

  TEST_CASE("identity and coherent-sum application") {
    Rng rng(6);
    const ComplexSignal z(random_cvec(50, rng), kFs);
    const auto id = apply_rx_beamformer(all_ones_beamformer(BeamMethod::MMSE_RX, 1), std::vector{z}, 0);
    for (std::size_t t = 0; t < 50; ++t) CHECK(id[t] == z[t]);
    const auto sum = apply_rx_beamformer(all_ones_beamformer(BeamMethod::MMSE_RX, 3), std::vector{z, z, z}, 0);
    for (std::size_t t = 0; t < 50; ++t) CHECK(std::abs(sum[t] - 3.0 * z[t]) < 1e-14);
  }

  TEST_CASE("noiseless self-consistency with full covariance") {
    // Two coprime two-tap channels admit an exact three-tap inverse pair.
    Rng rng(7);
    const auto s = random_cvec(400, rng);
    const CVec h1{{1, 0}, {0.5, 0.2}}, h2{{0.3, -0.7}, {-0.9, 0.1}};
    std::vector<DelayMatrix> per;
    for (const auto& h : {h1, h2}) {
      auto z = oracle::convolve(s, h);
      per.push_back(build_delay_matrix({z, kFs}, 0, s.size(), 3));
    }
    const auto Z = stack_delay_matrices(per);
    const auto sbar = training_row(s, 3);
    MmseOptions o;
    o.loading = 1e-9 * (Z * Z.adjoint()).trace().real() / 6.0;
    const auto bf = mmse_rx_beamformer(Z, sbar, 2, o);
    const Eigen::RowVectorXcd y = stack_weights(bf).adjoint() * Z;
    // Compare on the training support, away from the truncated window edges.
    double err = 0, ref = 0;
    for (std::size_t t = 4; t + 4 < s.size(); ++t) {
      err += std::norm(y(static_cast<Eigen::Index>(t + 1)) - s[t]);
      ref += std::norm(s[t]);
    }
    CHECK(std::sqrt(err / ref) <= 1e-6);
  }

  TEST_CASE("null depth deepens as loading shrinks") {
    Rng rng(8);
    const std::size_t L = 512;
    const auto s = random_cvec(L, rng);
    const auto j = random_cvec(L, rng, 10.0);
    const auto h = random_cvec(3, rng), g = random_cvec(3, rng);
    std::vector<DelayMatrix> per;
    for (std::size_t n = 0; n < 3; ++n) {
      CVec z(L);
      for (std::size_t t = 0; t < L; ++t) z[t] = h[n] * s[t] + g[n] * j[t];
      per.push_back(build_delay_matrix({z, kFs}, 0, L, 1));
    }
    const auto Z = stack_delay_matrices(per);
    const double scale = (Z * Z.adjoint()).trace().real() / 3.0;
    double prev = INFINITY;
    for (int e = -1; e >= -7; --e) {
      MmseOptions o;
      o.loading = scale * std::pow(10.0, e);
      const auto bf = mmse_rx_beamformer(Z, training_row(s, 1), 3, o);
      const CVec w{bf.weights[0][0], bf.weights[1][0], bf.weights[2][0]};
      const double p = interference_output(w, g) / interference_output(w, h);
      CHECK(p <= prev * (1 + 1e-9));
      prev = p;
    }
    CHECK(prev < 1e-8);
  }

  TEST_CASE("solver survives condition number 1e10 and reports its residual") {
    Rng rng(9);
    const Eigen::Index d = 6, L = 64;
    Eigen::MatrixXcd A(d, d), B(L, L);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index k = 0; k < d; ++k) A(i, k) = rng.complex_normal(1.0);
    for (Eigen::Index i = 0; i < L; ++i)
      for (Eigen::Index k = 0; k < L; ++k) B(i, k) = rng.complex_normal(1.0);
    const Eigen::MatrixXcd U = A.householderQr().householderQ();
    const Eigen::MatrixXcd V = B.householderQr().householderQ();
    Eigen::MatrixXcd S = Eigen::MatrixXcd::Zero(d, L);
    for (Eigen::Index i = 0; i < d; ++i) S(i, i) = std::pow(10.0, -5.0 * static_cast<double>(i) / (d - 1));
    const Eigen::MatrixXcd Z = U * S * V.adjoint();
    Eigen::RowVectorXcd s(L);
    for (Eigen::Index i = 0; i < L; ++i) s(i) = rng.complex_normal(1.0);
    MmseOptions o;
    o.loading = 0.0;
    const auto bf = mmse_rx_beamformer(Z, s, 1, o);
    const Eigen::MatrixXcd C = Z * Z.adjoint();
    const Eigen::VectorXcd rhs = Z * s.adjoint();
    CHECK(bf.solve_residual <= 1e-6);
    CHECK((C * stack_weights(bf) - rhs).norm() / rhs.norm() <= 1e-6);
  }

  TEST_CASE("rank-deficient covariance without loading is refused") {
    Rng rng(10);
    const auto s = random_cvec(32, rng);
    std::vector<DelayMatrix> per;
    for (int n = 0; n < 2; ++n) per.push_back(build_delay_matrix({s, kFs}, 0, 32, 1));
    MmseOptions o;
    o.loading = 0.0;
    CHECK_THROWS_WITH_AS(mmse_rx_beamformer(stack_delay_matrices(per), training_row(s, 1), 2, o),
                         doctest::Contains("δ > 0"), std::runtime_error);
    MmseOptions missing;
    missing.source = CovarianceSource::INTERFERENCE_ONLY;
    CHECK_THROWS_AS(mmse_rx_beamformer(stack_delay_matrices(per), training_row(s, 1), 2, missing),
                    std::invalid_argument);
  }

  TEST_CASE("matched filter examples") {
    const auto w = stmf_filter({CVec{{0, 0}, {0, 1}}, 0, ""});
    REQUIRE(w.size() == 2);
    CHECK(std::abs(w[0] - cplx{0, 1}) < 1e-15);
    CHECK(w[1] == cplx{});
    CHECK(stmf_filter({CVec{{1, 0}}, 0, ""}) == CVec{{1, 0}});
    CHECK_THROWS(stmf_filter({CVec{{0, 0}, {0, 0}}, 0, ""}));

    std::vector<ChannelEstimate> est{{CVec{{1, 0}, {0, 1}, {0, 0}}, 0, ""}, {CVec{{2, 0}, {0, 0}, {1, 1}}, 0, ""}};
    const auto bf = stmf_beamformer(est);
    CHECK(bf.method == BeamMethod::STMF);
    CHECK(bf.center_delay == 2);
    for (const auto& wn : bf.weights) {
      double e = 0;
      for (const auto& v : wn) e += std::norm(v);
      CHECK(e == doctest::Approx(1.0));
    }
  }

  TEST_CASE("matched filter beats random unit-norm filters") {
    Rng rng(11);
    const auto h = random_cvec(4, rng);
    const auto w = stmf_filter({h, 0, ""});
    auto peak = [&](const CVec& filt) {
      CVec c(filt.size());
      for (std::size_t i = 0; i < filt.size(); ++i) c[i] = std::conj(filt[i]);
      double best = 0;
      for (const auto& v : oracle::convolve(h, c)) best = std::max(best, std::norm(v));
      return best;
    };
    const double mf = peak(w);
    double e = 0;
    for (const auto& v : h) e += std::norm(v);
    CHECK(mf == doctest::Approx(e));
    for (int k = 0; k < 10000; ++k) {
      auto r = random_cvec(4, rng);
      double n = 0;
      for (const auto& v : r) n += std::norm(v);
      for (auto& v : r) v /= std::sqrt(n);
      CHECK(peak(r) <= mf * (1 + 1e-12));
    }
  }

  TEST_CASE("predistortion is conj(w) convolved with s") {
    const CVec w{{1, 1}, {0, 2}};
    const CVec s{{1, 0}, {2, 0}, {0, 1}};
    const auto y = predistort(w, s);
    const auto ref = oracle::convolve(s, CVec{std::conj(w[0]), std::conj(w[1])});
    REQUIRE(y.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-15);
  }

  TEST_CASE("two-node null closed form") {
    const CVec hB{{1, 0}, {1, 0}}, hC{{1, 0}, {-1, 0}};
    for (double delta : {1e-6, 0.1, 10.0}) {
      const auto w = tx_null_beamformer(hB, hC, delta);
      CHECK(std::abs(w[0] - w[1]) < 1e-14);
      CHECK(std::norm(w[0]) + std::norm(w[1]) == doctest::Approx(1.0));
      CHECK(std::abs(hC[0] * std::conj(w[0]) + hC[1] * std::conj(w[1])) < 1e-14);
    }
    CHECK_THROWS_AS(tx_null_beamformer(hB, hC, 0.0), std::invalid_argument);
  }

  TEST_CASE("no secondary direction reduces to conjugate beamforming") {
    Rng rng(12);
    const auto hB = random_cvec(3, rng);
    const auto w = tx_null_beamformer(hB, CVec(3), 0.5);
    const cplx r = w[0] / hB[0];
    for (std::size_t n = 0; n < 3; ++n) CHECK(std::abs(w[n] - r * hB[n]) < 1e-14);
  }

  TEST_CASE("null ratio falls monotonically as loading shrinks") {
    Rng rng(13);
    for (bool orthogonal : {true, false}) {
      auto hB = random_cvec(3, rng), hC = random_cvec(3, rng);
      if (orthogonal) {
        cplx proj{};
        double nb = 0;
        for (std::size_t n = 0; n < 3; ++n) {
          proj += std::conj(hB[n]) * hC[n];
          nb += std::norm(hB[n]);
        }
        for (std::size_t n = 0; n < 3; ++n) hC[n] -= proj / nb * hB[n];
      }
      double prev = INFINITY;
      for (int e = 0; e >= -8; --e) {
        const auto w = tx_null_beamformer(hB, hC, std::pow(10.0, e));
        const double ratio = interference_output(w, hC) / interference_output(w, hB);
        CHECK(ratio <= prev * (1 + 1e-9) + 1e-30);
        prev = ratio;
      }
      CHECK(prev < (orthogonal ? 1e-28 : 1e-12));
    }
  }

  TEST_CASE("null direction is invariant to scaling the primary channel") {
    Rng rng(14);
    const auto hB = random_cvec(3, rng), hC = random_cvec(3, rng);
    CVec scaled(3);
    const cplx a{-2.5, 0.7};
    for (std::size_t n = 0; n < 3; ++n) scaled[n] = a * hB[n];
    const auto w1 = tx_null_beamformer(hB, hC, 0.01), w2 = tx_null_beamformer(scaled, hC, 0.01);
    const cplx r = w2[0] / w1[0];
    CHECK(std::abs(r) == doctest::Approx(1.0));
    for (std::size_t n = 0; n < 3; ++n) CHECK(std::abs(w2[n] - r * w1[n]) < 1e-12);
  }

  TEST_CASE("dominant tap picks the earliest of equal magnitudes") {
    CHECK(dominant_tap(CVec{{0.1, 0}, {0, 1}, {1, 0}}) == cplx{0, 1});
    CHECK(dominant_tap(CVec{{0.1, 0}, {0, -3}, {1, 0}}) == cplx{0, -3});
  }

  TEST_CASE("output noise power for white and coloured node noise") {
    Rng rng(15);
    Beamformer bf;
    bf.center_delay = 1;
    for (int n = 0; n < 2; ++n) bf.weights.push_back(random_cvec(3, rng));
    double e = 0;
    for (const auto& w : bf.weights)
      for (const auto& v : w) e += std::norm(v);
    CHECK(output_noise_power(bf, std::vector<CVec>{CVec{{0.2, 0}}}) == doctest::Approx(0.2 * e));

    // Noise coloured by g: the output is white noise through conv(conj w, g).
    const CVec g{{1, 0}, {0.5, 0.3}, {-0.2, 0.1}};
    const double P = 0.7;
    CVec r(3);
    for (std::size_t d = 0; d < 3; ++d)
      for (std::size_t k = d; k < 3; ++k) r[d] += P * g[k] * std::conj(g[k - d]);
    double expect = 0;
    for (const auto& w : bf.weights) {
      CVec wc(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) wc[i] = std::conj(w[i]);
      for (const auto& v : oracle::convolve(wc, g)) expect += P * std::norm(v);
    }
    CHECK(output_noise_power(bf, std::vector<CVec>{r, r}) == doctest::Approx(expect).epsilon(1e-12));
  }

  TEST_CASE("all-ones beamformer") {
    const auto bf = all_ones_beamformer(BeamMethod::TX_NULL, 3);
    CHECK(bf.n_nodes() == 3);
    CHECK(bf.filter_taps() == 1);
    CHECK(bf.source_cycle == -1);
    CHECK(bf.all_finite());
  }
}
