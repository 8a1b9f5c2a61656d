#include "gengap/brir.hpp"

#include <cmath>
#include <stdexcept>

#include "gengap/rng.hpp"

namespace gengap {

std::size_t detect_direct_peak(const Brir& brir) {
  if (brir.left.size() != brir.right.size())
    throw std::invalid_argument("detect_direct_peak: channel length mismatch");
  double best = 0.0;
  std::size_t best_idx = 0;
  for (std::size_t i = 0; i < brir.size(); ++i) {
    const double p = brir.left[i] * brir.left[i] + brir.right[i] * brir.right[i];
    if (p > best) {
      best = p;
      best_idx = i;
    }
  }
  if (best == 0.0) throw std::runtime_error("detect_direct_peak: all-zero BRIR");
  return best_idx;
}

DirectReverbPair split_direct_reverb(const Brir& brir, double boundary_ms, double ramp_ms) {
  const std::size_t n = brir.size();
  const std::size_t peak = detect_direct_peak(brir);
  const auto boundary =
      static_cast<std::size_t>(std::llround(boundary_ms * brir.sample_rate / 1000.0));
  const auto ramp =
      std::max<std::size_t>(1, static_cast<std::size_t>(
                                   std::llround(ramp_ms * brir.sample_rate / 1000.0)));

  DirectReverbPair pair{brir, brir};
  const std::size_t window_end = peak + boundary;
  if (window_end >= n) {
    // Boundary beyond the BRIR: everything is direct.
    for (std::size_t i = 0; i < n; ++i) {
      pair.reverberant.left[i] = 0.0;
      pair.reverberant.right[i] = 0.0;
    }
    return pair;
  }

  const std::size_t flat_end = window_end - std::min(ramp, window_end);
  for (std::size_t i = 0; i < n; ++i) {
    double w;
    if (i <= flat_end) {
      w = 1.0;
    } else if (i <= window_end) {
      w = 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(i - flat_end) /
                                static_cast<double>(ramp)));
    } else {
      w = 0.0;
    }
    pair.direct.left[i] = brir.left[i] * w;
    pair.direct.right[i] = brir.right[i] * w;
    pair.reverberant.left[i] = brir.left[i] * (1.0 - w);
    pair.reverberant.right[i] = brir.right[i] * (1.0 - w);
  }
  return pair;
}

namespace {

constexpr double kMaxItdMs = 0.66;
constexpr double kMaxIldDb = 6.0;

// One-pole lowpass coloring, then multiply by the decay envelope.
void shape_tail(Signal& tail, double lowpass, double decay_per_sample) {
  double state = 0.0;
  double env = 1.0;
  for (double& x : tail) {
    state = (1.0 - lowpass) * x + lowpass * state;
    x = state * env;
    env *= decay_per_sample;
  }
}

}  // namespace

Brir synth_brir(uint64_t seed, const RoomProfile& profile, double azimuth_deg) {
  if (profile.rt60_s <= 0.0) throw std::invalid_argument("synth_brir: rt60_s must be > 0");
  const int fs = kSampleRate;
  const double az_rad = azimuth_deg * M_PI / 180.0;

  // Channels are synthesized in near/far ear roles so that the result is
  // exactly mirror-symmetric in the azimuth sign. Positive azimuth puts the
  // source on the right, so the right ear is the near one.
  const double itd_s = kMaxItdMs / 1000.0 * std::abs(std::sin(az_rad));
  const double ild_db = kMaxIldDb * std::abs(std::sin(az_rad));
  const auto far_lag = static_cast<std::size_t>(std::llround(itd_s * fs));
  const double near_gain = std::pow(10.0, ild_db / 2.0 / 20.0);
  const double far_gain = std::pow(10.0, -ild_db / 2.0 / 20.0);

  const auto direct_at =
      static_cast<std::size_t>(std::llround(profile.direct_delay_ms / 1000.0 * fs));
  const auto n = static_cast<std::size_t>(
      std::llround((profile.direct_delay_ms / 1000.0 + 1.4 * profile.rt60_s) * fs));

  Signal near_ear(n, 0.0), far_ear(n, 0.0);
  near_ear[direct_at] = near_gain;
  if (direct_at + far_lag < n) far_ear[direct_at + far_lag] = far_gain;

  Rng rng(derive_seed(seed, std::string("brir")));
  for (int k = 0; k < profile.n_early_reflections; ++k) {
    const double t_ms = rng.uniform(3.0, 40.0);
    const double amp = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 0.5) *
                       std::exp(-t_ms / 30.0);
    const long refl_lag = std::lround(rng.uniform(-kMaxItdMs, kMaxItdMs) / 1000.0 * fs);
    const long near_at = static_cast<long>(direct_at) + std::lround(t_ms / 1000.0 * fs);
    const long far_at = near_at + refl_lag;
    if (near_at >= 0 && near_at < static_cast<long>(n)) near_ear[near_at] += amp;
    if (far_at >= 0 && far_at < static_cast<long>(n)) far_ear[far_at] += amp;
  }

  // Exponential tail: amplitude decays by 60 dB of energy over rt60_s.
  const auto tail_start = direct_at + static_cast<std::size_t>(std::llround(0.002 * fs));
  const double decay = std::pow(10.0, -3.0 / (profile.rt60_s * fs));
  Signal tail_near(n - tail_start), tail_far(n - tail_start);
  Rng rng_near(derive_seed(seed, std::string("tail-near")));
  Rng rng_far(derive_seed(seed, std::string("tail-far")));
  for (auto& x : tail_near) x = rng_near.normal();
  for (auto& x : tail_far) x = rng_far.normal();
  shape_tail(tail_near, profile.tail_lowpass, decay);
  shape_tail(tail_far, profile.tail_lowpass, decay);

  const double direct_energy = near_gain * near_gain + far_gain * far_gain;
  const double tail_energy = energy(tail_near) + energy(tail_far);
  const double target = direct_energy / std::pow(10.0, profile.direct_to_reverb_db / 10.0);
  const double tail_scale = tail_energy > 0.0 ? std::sqrt(target / tail_energy) : 0.0;
  for (std::size_t i = 0; i < tail_near.size(); ++i) {
    near_ear[tail_start + i] += tail_scale * tail_near[i];
    far_ear[tail_start + i] += tail_scale * tail_far[i];
  }

  Brir out;
  out.sample_rate = fs;
  out.azimuth_deg = azimuth_deg;
  if (azimuth_deg >= 0.0) {
    out.right = std::move(near_ear);
    out.left = std::move(far_ear);
  } else {
    out.left = std::move(near_ear);
    out.right = std::move(far_ear);
  }
  return out;
}

}  // namespace gengap
