#include <doctest.h>

#include <cmath>

#include "gengap/dsp.hpp"
#include "gengap/rng.hpp"
#include "test_support.hpp"

using namespace gengap;

namespace {

double roundtrip_rel_l2(const Signal& x, std::size_t skip = 256) {
  const Signal back = istft(stft(x));
  REQUIRE(back.size() == x.size());
  double err = 0.0, ref = 0.0;
  for (std::size_t i = skip; i < x.size(); ++i) {
    const double d = back[i] - x[i];
    err += d * d;
    ref += x[i] * x[i];
  }
  return ref > 0.0 ? std::sqrt(err / ref) : std::sqrt(err);
}

// Harmonic complex with an on/off envelope, a stand-in for speech material.
Signal speech_like(std::size_t n) {
  Signal s(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    double x = 0.0;
    for (int k = 1; k <= 12; ++k)
      x += std::sin(2.0 * M_PI * 150.0 * k * t + 0.3 * k) / k;
    s[i] = 0.1 * x * (0.5 + 0.5 * std::sin(2.0 * M_PI * 4.0 * t));
  }
  return s;
}

}  // namespace

TEST_CASE("stft frame count and bin layout") {
  const Spectrogram spec = stft(Signal(2048, 0.0));
  CHECK(spec.n_bins() == 257);
  CHECK(spec.n_frames() == 8);  // ceil(2048 / 256)
  CHECK(spec.n_samples == 2048);

  const Spectrogram odd = stft(Signal(1000, 0.0));
  CHECK(odd.n_frames() == 4);  // ceil(1000 / 256)

  const Spectrogram empty = stft(Signal{});
  CHECK(empty.n_frames() == 0);
  CHECK(istft(empty).empty());
}

TEST_CASE("1 kHz sine concentrates in bin 32") {
  Signal s(8192);
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = std::sin(2.0 * M_PI * 1000.0 * static_cast<double>(i) / kSampleRate);
  const Spectrogram spec = stft(s);
  const Eigen::Index mid = spec.n_frames() / 2;
  Eigen::Index argmax = 0;
  for (Eigen::Index k = 1; k < spec.n_bins(); ++k)
    if (std::abs(spec.coeffs(k, mid)) > std::abs(spec.coeffs(argmax, mid))) argmax = k;
  CHECK(argmax == 32);  // 1000 * 512 / 16000
}

TEST_CASE("stft of zeros is zero and round trips") {
  const Spectrogram spec = stft(Signal(4096, 0.0));
  CHECK(spec.coeffs.cwiseAbs().maxCoeff() == 0.0);
  const Signal back = istft(spec);
  for (double v : back) CHECK(v == 0.0);
}

TEST_CASE("stft round trip within 1e-6 on random and speech-like signals") {
  CHECK(roundtrip_rel_l2(test::random_signal(3, 6000)) < 1e-6);
  CHECK(roundtrip_rel_l2(test::random_signal(4, 5000)) < 1e-6);
  CHECK(roundtrip_rel_l2(speech_like(8000)) < 1e-6);
}

TEST_CASE("istft rejects a mismatched config") {
  const Spectrogram spec = stft(Signal(1024, 0.0));
  CHECK_THROWS_WITH(istft(spec, StftConfig{.frame_len = 256, .hop = 128}),
                    doctest::Contains("config"));
}

TEST_CASE("mel scale formula") {
  CHECK(hz_to_mel(0.0) == 0.0);
  // 2595 log10(1 + 1000/700), evaluated independently.
  const double expected = 2595.0 * std::log10(1.0 + 1000.0 / 700.0);
  CHECK(hz_to_mel(1000.0) == doctest::Approx(expected));
  CHECK(expected == doctest::Approx(999.99).epsilon(1e-4));
  CHECK(mel_to_hz(hz_to_mel(440.0)) == doctest::Approx(440.0));
}

TEST_CASE("mel filterbank shape and structure") {
  const MelFilterbank fb = mel_filterbank();
  CHECK(fb.gains.rows() == 64);
  CHECK(fb.gains.cols() == 257);
  for (Eigen::Index m = 0; m < fb.n_filters(); ++m) {
    CHECK(fb.gains.row(m).maxCoeff() > 0.0);  // no empty rows
    CHECK(fb.gains.row(m).maxCoeff() <= 1.0);
    CHECK(fb.gains.row(m).minCoeff() >= 0.0);
  }
  for (Eigen::Index m = 1; m < fb.n_filters(); ++m)
    CHECK(fb.center_hz(m) > fb.center_hz(m - 1));

  CHECK_THROWS(mel_filterbank(64, 8000.0, 50.0));
  CHECK_THROWS(mel_filterbank(64, 50.0, 9000.0));
}

TEST_CASE("log_mel_features floor, scaling and brute-force equivalence") {
  const MelFilterbank fb = mel_filterbank();

  const FeatureMatrix silent = log_mel_features(stft(Signal(2048, 0.0)), fb);
  for (Eigen::Index i = 0; i < silent.size(); ++i)
    CHECK(silent(i) == doctest::Approx(std::log(1e-10)));

  const Signal x = speech_like(4000);
  Signal x2 = x;
  scale_in_place(x2, 2.0);
  const FeatureMatrix f1 = log_mel_features(stft(x), fb);
  const FeatureMatrix f2 = log_mel_features(stft(x2), fb);
  // Doubling the amplitude quadruples the power: features shift by log 4
  // wherever the 1e-10 floor is immaterial.
  Eigen::Index checked = 0;
  for (Eigen::Index c = 0; c < f1.cols(); ++c)
    for (Eigen::Index r = 0; r < f1.rows(); ++r)
      if (f1(r, c) > std::log(1e-3)) {
        CHECK(f2(r, c) - f1(r, c) == doctest::Approx(std::log(4.0)).epsilon(1e-6));
        ++checked;
      }
  CHECK(checked > 100);

  // Direct double summation oracle.
  const Spectrogram spec = stft(x);
  for (Eigen::Index l = 0; l < std::min<Eigen::Index>(3, spec.n_frames()); ++l)
    for (Eigen::Index m = 0; m < fb.n_filters(); ++m) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < spec.n_bins(); ++k)
        acc += fb.gains(m, k) * std::norm(spec.coeffs(k, l));
      const double expected = std::log(acc + 1e-10);
      CHECK(f1(m, l) == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("stack_context concatenates the causal window") {
  FeatureMatrix f(64, 10);
  for (Eigen::Index c = 0; c < 10; ++c) f.col(c).setConstant(static_cast<double>(c + 1));
  const FeatureMatrix stacked = stack_context(f);
  CHECK(stacked.rows() == 384);
  CHECK(stacked.cols() == 10);

  // Frame 0: five zero blocks then frame 0.
  for (int j = 0; j < 5; ++j) CHECK(stacked(j * 64, 0) == 0.0);
  CHECK(stacked(5 * 64, 0) == 1.0);
  // Frame 7 holds frames 2..7 in order.
  for (int j = 0; j <= 5; ++j) CHECK(stacked(j * 64, 7) == static_cast<double>(2 + j + 1));

  // Constant input: every stacked frame from index 5 on is six copies.
  FeatureMatrix c = FeatureMatrix::Constant(64, 8, 3.25);
  const FeatureMatrix sc = stack_context(c);
  for (Eigen::Index col = 5; col < 8; ++col)
    for (Eigen::Index r = 0; r < 384; ++r) CHECK(sc(r, col) == 3.25);
}

TEST_CASE("IRM limits and the equal-energy closed form") {
  const MelFilterbank fb = mel_filterbank();
  const Signal s = speech_like(4000);
  const Spectrogram spec_s = stft(s);
  const Spectrogram zeros = stft(Signal(4000, 0.0));

  const FeatureMatrix irm_clean = compute_irm(spec_s, zeros, fb);
  const FeatureMatrix mel_power = (fb.gains * spec_s.coeffs.cwiseAbs2());
  for (Eigen::Index c = 0; c < irm_clean.cols(); ++c)
    for (Eigen::Index r = 0; r < irm_clean.rows(); ++r) {
      if (mel_power(r, c) > 0.0)
        CHECK(irm_clean(r, c) == 1.0);
      else
        CHECK(irm_clean(r, c) == 0.0);
    }

  const FeatureMatrix irm_silent = compute_irm(zeros, spec_s, fb);
  CHECK(irm_silent.maxCoeff() == 0.0);

  // Equal per-bin energies: IRM = 1/sqrt(2) exactly.
  const FeatureMatrix irm_equal = compute_irm(spec_s, spec_s, fb);
  for (Eigen::Index c = 0; c < irm_equal.cols(); ++c)
    for (Eigen::Index r = 0; r < irm_equal.rows(); ++r)
      if (mel_power(r, c) > 0.0)
        CHECK(std::abs(irm_equal(r, c) - 1.0 / std::sqrt(2.0)) < 1e-12);

  CHECK_THROWS(compute_irm(spec_s, stft(Signal(2000, 0.0)), fb));
}

TEST_CASE("IRM stays in range and decreases as background grows") {
  const MelFilterbank fb = mel_filterbank();
  const Signal s = speech_like(4000);
  const Signal n = test::random_signal(9, 4000);
  const Spectrogram spec_s = stft(s);

  FeatureMatrix prev;
  for (double gain : {0.25, 1.0, 4.0}) {
    Signal scaled = n;
    scale_in_place(scaled, gain);
    const FeatureMatrix irm = compute_irm(spec_s, stft(scaled), fb);
    CHECK(irm.minCoeff() >= 0.0);
    CHECK(irm.maxCoeff() <= 1.0);
    if (prev.size() > 0)
      for (Eigen::Index i = 0; i < irm.size(); ++i) CHECK(irm(i) <= prev(i) + 1e-12);
    prev = irm;
  }
}

TEST_CASE("apply_mask identity, zero and constant extrapolation") {
  const MelFilterbank fb = mel_filterbank();
  const Signal x = speech_like(3000);
  const Spectrogram spec = stft(x);

  const Eigen::VectorXd coverage = fb.gains.colwise().sum();
  const FeatureMatrix ones = FeatureMatrix::Ones(64, spec.n_frames());
  const Spectrogram same = apply_mask(ones, spec, fb);
  for (Eigen::Index l = 0; l < spec.n_frames(); ++l)
    for (Eigen::Index k = 0; k < spec.n_bins(); ++k)
      if (coverage(k) > 0.0) CHECK(same.coeffs(k, l) == spec.coeffs(k, l));  // bit-equal

  const Spectrogram zeroed = apply_mask(FeatureMatrix::Zero(64, spec.n_frames()), spec, fb);
  CHECK(zeroed.coeffs.cwiseAbs().maxCoeff() == 0.0);

  const FeatureMatrix constant = FeatureMatrix::Constant(64, spec.n_frames(), 0.37);
  const Spectrogram scaled = apply_mask(constant, spec, fb);
  for (Eigen::Index k = 0; k < spec.n_bins(); ++k) {
    if (coverage(k) == 0.0 || std::abs(spec.coeffs(k, 4)) == 0.0) continue;
    const double g = std::abs(scaled.coeffs(k, 4)) / std::abs(spec.coeffs(k, 4));
    CHECK(g == doctest::Approx(0.37).epsilon(1e-12));
  }

  CHECK_THROWS(apply_mask(FeatureMatrix::Ones(32, spec.n_frames()), spec, fb));
}
