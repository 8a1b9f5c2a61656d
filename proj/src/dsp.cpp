#include "gengap/dsp.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "gengap/fft.hpp"

namespace gengap {

namespace {

Signal hann_window(int n) {
  Signal w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / static_cast<double>(n)));
  return w;
}

}  // namespace

Spectrogram stft(const Signal& signal, const StftConfig& config) {
  const int n_fft = config.frame_len;
  const int hop = config.hop;
  const int n_bins = config.n_bins();

  Spectrogram out;
  out.config = config;
  out.n_samples = signal.size();
  if (signal.empty()) {
    out.coeffs.resize(n_bins, 0);
    return out;
  }

  const auto n_frames = static_cast<Eigen::Index>((signal.size() + hop - 1) / hop);
  out.coeffs.resize(n_bins, n_frames);

  const Signal window = hann_window(n_fft);
  std::vector<std::complex<double>> frame(n_fft);
  for (Eigen::Index l = 0; l < n_frames; ++l) {
    const std::size_t start = static_cast<std::size_t>(l) * hop;
    for (int i = 0; i < n_fft; ++i) {
      const std::size_t idx = start + i;
      frame[i] = idx < signal.size() ? signal[idx] * window[i] : 0.0;
    }
    fft(frame);
    for (int k = 0; k < n_bins; ++k) out.coeffs(k, l) = frame[k];
  }
  return out;
}

Signal istft(const Spectrogram& spec, const StftConfig& config) {
  if (!(spec.config == config))
    throw std::invalid_argument("istft: config does not match the analysis config");
  const int n_fft = config.frame_len;
  const int hop = config.hop;
  const int n_bins = config.n_bins();
  if (spec.n_samples == 0) return {};
  if (spec.coeffs.rows() != n_bins) throw std::invalid_argument("istft: wrong bin count");

  const Signal window = hann_window(n_fft);
  Signal num(spec.n_samples, 0.0), den(spec.n_samples, 0.0);
  std::vector<std::complex<double>> frame(n_fft);
  for (Eigen::Index l = 0; l < spec.n_frames(); ++l) {
    // Rebuild the full spectrum from the half-spectrum by conjugate symmetry.
    for (int k = 0; k < n_bins; ++k) frame[k] = spec.coeffs(k, l);
    for (int k = n_bins; k < n_fft; ++k) frame[k] = std::conj(spec.coeffs(n_fft - k, l));
    fft(frame, true);
    const std::size_t start = static_cast<std::size_t>(l) * hop;
    for (int i = 0; i < n_fft; ++i) {
      const std::size_t idx = start + i;
      if (idx >= spec.n_samples) break;
      num[idx] += window[i] * frame[i].real();
      den[idx] += window[i] * window[i];
    }
  }
  // The window-power sum is in [0.5, 1] wherever two frames overlap; only the
  // first half-frame falls below. Flooring the denominator keeps interior
  // reconstruction exact and prevents modified (masked) spectra from being
  // amplified by the near-zero window weights at the signal edge.
  for (std::size_t i = 0; i < num.size(); ++i) num[i] /= std::max(den[i], 0.5);
  return num;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank mel_filterbank(int n_filters, double f_lo_hz, double f_hi_hz, int n_bins,
                             int sample_rate) {
  const double nyquist = sample_rate / 2.0;
  if (!(f_lo_hz >= 0.0 && f_lo_hz < f_hi_hz && f_hi_hz <= nyquist))
    throw std::invalid_argument("mel_filterbank: need 0 <= f_lo < f_hi <= Nyquist");

  // n_filters + 2 equally spaced mel points: edges and centers of the
  // triangles. Gains are interpolated in the mel domain.
  const double mel_lo = hz_to_mel(f_lo_hz);
  const double mel_hi = hz_to_mel(f_hi_hz);
  std::vector<double> mel_points(n_filters + 2);
  for (int i = 0; i < n_filters + 2; ++i)
    mel_points[i] = mel_lo + (mel_hi - mel_lo) * i / static_cast<double>(n_filters + 1);

  // Bin spacing assumes the usual n_bins = frame_len/2 + 1 layout.
  const int n_fft = 2 * (n_bins - 1);
  MelFilterbank fb;
  fb.gains = Eigen::MatrixXd::Zero(n_filters, n_bins);
  fb.center_hz.resize(n_filters);
  for (int m = 0; m < n_filters; ++m) {
    const double left = mel_points[m];
    const double center = mel_points[m + 1];
    const double right = mel_points[m + 2];
    fb.center_hz(m) = mel_to_hz(center);
    for (int k = 0; k < n_bins; ++k) {
      const double mel_k = hz_to_mel(static_cast<double>(k) * sample_rate / n_fft);
      double g = 0.0;
      if (mel_k > left && mel_k < right) {
        g = mel_k <= center ? (mel_k - left) / (center - left)
                            : (right - mel_k) / (right - center);
      }
      fb.gains(m, k) = g;
    }
  }
  return fb;
}

FeatureMatrix log_mel_features(const Spectrogram& spec, const MelFilterbank& fb, double eps) {
  if (fb.n_bins() != spec.n_bins())
    throw std::invalid_argument("log_mel_features: bin count mismatch");
  const Eigen::MatrixXd power = spec.coeffs.cwiseAbs2();
  return ((fb.gains * power).array() + eps).log().matrix();
}

FeatureMatrix stack_context(const FeatureMatrix& features, int n_prev) {
  const Eigen::Index dim = features.rows();
  const Eigen::Index n = features.cols();
  FeatureMatrix out = FeatureMatrix::Zero(dim * (n_prev + 1), n);
  for (Eigen::Index l = 0; l < n; ++l) {
    for (int j = 0; j <= n_prev; ++j) {
      const Eigen::Index src = l - n_prev + j;
      if (src >= 0) out.block(j * dim, l, dim, 1) = features.col(src);
    }
  }
  return out;
}

FeatureMatrix compute_irm(const Spectrogram& speech, const Spectrogram& background,
                          const MelFilterbank& fb) {
  if (speech.coeffs.rows() != background.coeffs.rows() ||
      speech.coeffs.cols() != background.coeffs.cols())
    throw std::invalid_argument("compute_irm: spectrogram shape mismatch");
  if (fb.n_bins() != speech.n_bins())
    throw std::invalid_argument("compute_irm: bin count mismatch");

  const Eigen::MatrixXd s = fb.gains * speech.coeffs.cwiseAbs2();
  const Eigen::MatrixXd n = fb.gains * background.coeffs.cwiseAbs2();
  FeatureMatrix irm(s.rows(), s.cols());
  for (Eigen::Index c = 0; c < s.cols(); ++c)
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      const double denom = s(r, c) + n(r, c);
      irm(r, c) = denom > 0.0 ? std::sqrt(s(r, c) / denom) : 0.0;
    }
  return irm;
}

Spectrogram apply_mask(const FeatureMatrix& mel_mask, const Spectrogram& noisy,
                       const MelFilterbank& fb) {
  if (mel_mask.rows() != fb.n_filters())
    throw std::invalid_argument("apply_mask: mask filter count mismatch");
  if (mel_mask.cols() != noisy.n_frames())
    throw std::invalid_argument("apply_mask: mask frame count mismatch");
  if (fb.n_bins() != noisy.n_bins())
    throw std::invalid_argument("apply_mask: bin count mismatch");

  const Eigen::Index n_bins = fb.n_bins();
  const Eigen::Index n_filters = fb.n_filters();

  // Coverage accumulated in the same order as the mask numerator below, so a
  // mel-constant mask yields that exact constant on every covered bin.
  Eigen::VectorXd coverage = Eigen::VectorXd::Zero(n_bins);
  for (Eigen::Index k = 0; k < n_bins; ++k)
    for (Eigen::Index m = 0; m < n_filters; ++m) coverage(k) += fb.gains(m, k);

  // Bins the filterbank does not reach borrow the gain of the nearest
  // covered bin (ties toward lower bins).
  std::vector<Eigen::Index> source_bin(n_bins);
  std::vector<Eigen::Index> covered;
  for (Eigen::Index k = 0; k < n_bins; ++k)
    if (coverage(k) > 0.0) covered.push_back(k);
  if (covered.empty()) throw std::invalid_argument("apply_mask: filterbank covers no bins");
  for (Eigen::Index k = 0; k < n_bins; ++k) {
    if (coverage(k) > 0.0) {
      source_bin[k] = k;
      continue;
    }
    Eigen::Index best = covered.front();
    for (Eigen::Index c : covered)
      if (std::llabs(c - k) < std::llabs(best - k)) best = c;
    source_bin[k] = best;
  }

  Spectrogram out = noisy;
  Eigen::VectorXd gain(n_bins);
  for (Eigen::Index l = 0; l < noisy.n_frames(); ++l) {
    for (Eigen::Index k = 0; k < n_bins; ++k) {
      double num = 0.0;
      for (Eigen::Index m = 0; m < n_filters; ++m) num += fb.gains(m, k) * mel_mask(m, l);
      gain(k) = coverage(k) > 0.0 ? num / coverage(k) : 0.0;
    }
    for (Eigen::Index k = 0; k < n_bins; ++k)
      out.coeffs(k, l) = noisy.coeffs(k, l) * gain(source_bin[k]);
  }
  return out;
}

}  // namespace gengap
