#ifndef GENGAP_DSP_HPP
#define GENGAP_DSP_HPP

#include <Eigen/Dense>

#include "gengap/common.hpp"

namespace gengap {

struct StftConfig {
  int frame_len = 512;
  int hop = 256;  // 50 % overlap, Hann window

  bool operator==(const StftConfig&) const = default;
  int n_bins() const { return frame_len / 2 + 1; }
};

// Complex STFT coefficients, bins x frames. Remembers the analysis config and
// the original signal length so the inverse reconstructs exactly.
struct Spectrogram {
  Eigen::MatrixXcd coeffs;
  StftConfig config;
  std::size_t n_samples = 0;

  Eigen::Index n_bins() const { return coeffs.rows(); }
  Eigen::Index n_frames() const { return coeffs.cols(); }
};

// ceil(len / hop) frames, tail zero-padded.
Spectrogram stft(const Signal& signal, const StftConfig& config = {});

// Weighted overlap-add with per-sample window normalization. Output length is
// the tracked original length. Throws if config differs from the analysis one.
Signal istft(const Spectrogram& spec, const StftConfig& config = {});

// 64 triangular filters with unit peak, evenly spaced on the mel scale.
struct MelFilterbank {
  Eigen::MatrixXd gains;  // n_filters x n_bins
  Eigen::VectorXd center_hz;

  Eigen::Index n_filters() const { return gains.rows(); }
  Eigen::Index n_bins() const { return gains.cols(); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

MelFilterbank mel_filterbank(int n_filters = 64, double f_lo_hz = 50.0, double f_hi_hz = 8000.0,
                             int n_bins = 257, int sample_rate = kSampleRate);

// Feature and mask matrices are dim x frames.
using FeatureMatrix = Eigen::MatrixXd;

// log(mel-integrated power + eps) per filter and frame.
FeatureMatrix log_mel_features(const Spectrogram& spec, const MelFilterbank& fb,
                               double eps = 1e-10);

// Concatenates frames l-n_prev..l (zeros before the start), so the stacked
// dimension is (n_prev + 1) * dim and the features stay causal.
FeatureMatrix stack_context(const FeatureMatrix& features, int n_prev = 5);

// Ideal ratio mask in the mel domain; 0/0 is defined as 0.
FeatureMatrix compute_irm(const Spectrogram& speech, const Spectrogram& background,
                          const MelFilterbank& fb);

// Extrapolates a mel-domain mask to the STFT axis as a coverage-normalized
// gain; bins without filter coverage copy the nearest covered bin. Phase is
// preserved.
Spectrogram apply_mask(const FeatureMatrix& mel_mask, const Spectrogram& noisy,
                       const MelFilterbank& fb);

}  // namespace gengap

#endif  // GENGAP_DSP_HPP
