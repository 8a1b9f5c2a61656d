#ifndef GENGAP_BRIR_HPP
#define GENGAP_BRIR_HPP

#include <cstdint>
#include <string>

#include "gengap/common.hpp"

namespace gengap {

// Two-channel impulse response from a source position to a listener's ears.
struct Brir {
  Signal left;
  Signal right;
  int sample_rate = kSampleRate;
  std::string room_label;
  double azimuth_deg = 0.0;

  std::size_t size() const { return left.size(); }
};

// Complementary split of a BRIR. direct + reverberant reconstructs the
// original sample-exactly up to float tolerance.
struct DirectReverbPair {
  Brir direct;
  Brir reverberant;
};

// Index of the largest per-sample power l^2 + r^2, earliest index on ties.
// Throws on an all-zero BRIR.
std::size_t detect_direct_peak(const Brir& brir);

// Splits around the direct-sound peak: the direct part keeps everything up to
// boundary_ms after the peak (early reflections included), with a
// half-raised-cosine ramp of ramp_ms closing the window. Both channels share
// the window anchored at the common peak. If the boundary falls beyond the
// BRIR, the direct part is the full BRIR and the reverberant part is zero.
DirectReverbPair split_direct_reverb(const Brir& brir, double boundary_ms = 50.0,
                                     double ramp_ms = 1.0);

// Parameters for synthetic BRIRs. Databases get different acoustics by
// varying these knobs per index.
struct RoomProfile {
  double rt60_s = 0.5;
  double direct_delay_ms = 4.0;
  double direct_to_reverb_db = 2.0;  // energy ratio of windowless direct pulse vs tail
  double tail_lowpass = 0.3;         // one-pole coefficient coloring the tail, [0, 1)
  int n_early_reflections = 5;
};

// Deterministic synthetic BRIR: delayed direct pulse with azimuth-dependent
// interaural time and level differences, a handful of early reflections, and
// an exponentially decaying noise tail matching rt60_s. Flipping the azimuth
// sign swaps the two channels sample-exactly.
Brir synth_brir(uint64_t seed, const RoomProfile& profile, double azimuth_deg);

}  // namespace gengap

#endif  // GENGAP_BRIR_HPP
