#include <doctest.h>

#include <cmath>

#include "gengap/brir.hpp"
#include "gengap/rng.hpp"
#include "test_support.hpp"

using namespace gengap;

namespace {

Brir impulse_brir(std::size_t n, std::size_t left_at, std::size_t right_at, double amp = 1.0) {
  Brir b;
  b.left.assign(n, 0.0);
  b.right.assign(n, 0.0);
  b.left[left_at] = amp;
  b.right[right_at] = amp;
  return b;
}

// Schroeder backward integration; returns the time where the decay curve
// crosses -60 dB.
double edc_rt60(const Brir& b) {
  const std::size_t n = b.size();
  std::vector<double> edc(n);
  double acc = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    acc += b.left[i] * b.left[i] + b.right[i] * b.right[i];
    edc[i] = acc;
  }
  const double total = edc[0];
  for (std::size_t i = 0; i < n; ++i)
    if (edc[i] / total <= 1e-6) return static_cast<double>(i) / b.sample_rate;
  return static_cast<double>(n) / b.sample_rate;
}

}  // namespace

TEST_CASE("detect_direct_peak finds the common peak, earliest on ties") {
  CHECK(detect_direct_peak(impulse_brir(400, 100, 100)) == 100);
  CHECK(detect_direct_peak(impulse_brir(400, 100, 110)) == 100);  // tie, earliest wins

  Brir zeros;
  zeros.left.assign(64, 0.0);
  zeros.right.assign(64, 0.0);
  CHECK_THROWS_WITH(detect_direct_peak(zeros), doctest::Contains("all-zero"));
}

TEST_CASE("split keeps a lone delta entirely in the direct part") {
  const Brir b = impulse_brir(2000, 50, 50);
  const DirectReverbPair pair = split_direct_reverb(b);
  CHECK(pair.direct.left[50] == 1.0);
  CHECK(energy(Stereo{pair.reverberant.left, pair.reverberant.right}) == 0.0);
}

TEST_CASE("split sends energy past the boundary into the reverberant part") {
  // Peak at 100, extra energy 100 ms later: outside the 50 ms window.
  Brir b = impulse_brir(4000, 100, 100);
  const std::size_t late = 100 + static_cast<std::size_t>(0.1 * kSampleRate);
  b.left[late] = 0.5;
  b.right[late] = 0.5;
  const DirectReverbPair pair = split_direct_reverb(b);
  CHECK(pair.direct.left[late] == 0.0);
  CHECK(pair.reverberant.left[late] == 0.5);
  CHECK(pair.reverberant.left[100] == 0.0);
}

TEST_CASE("boundary beyond the BRIR length keeps everything direct") {
  const Brir b = impulse_brir(300, 200, 200);  // 50 ms = 800 samples > length
  const DirectReverbPair pair = split_direct_reverb(b);
  for (std::size_t i = 0; i < b.size(); ++i) {
    CHECK(pair.direct.left[i] == b.left[i]);
    CHECK(pair.reverberant.left[i] == 0.0);
  }
}

TEST_CASE("window complementarity on synthetic BRIRs") {
  for (uint64_t seed : {1u, 2u, 3u}) {
    RoomProfile profile;
    profile.rt60_s = 0.4;
    const Brir b = synth_brir(seed, profile, 35.0);
    const DirectReverbPair pair = split_direct_reverb(b);
    double max_abs = 0.0, max_err = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      max_abs = std::max({max_abs, std::abs(b.left[i]), std::abs(b.right[i])});
      max_err = std::max(max_err, std::abs(pair.direct.left[i] + pair.reverberant.left[i] -
                                           b.left[i]));
      max_err = std::max(max_err, std::abs(pair.direct.right[i] + pair.reverberant.right[i] -
                                           b.right[i]));
    }
    CHECK(max_err <= 1e-7 * max_abs);
  }
}

TEST_CASE("direct energy never decreases with a larger boundary") {
  const Brir b = synth_brir(11, RoomProfile{}, -20.0);
  double prev = 0.0;
  for (double boundary_ms : {5.0, 10.0, 20.0, 50.0, 80.0, 120.0}) {
    const DirectReverbPair pair = split_direct_reverb(b, boundary_ms);
    const double e = energy(Stereo{pair.direct.left, pair.direct.right});
    CHECK(e >= prev);
    prev = e;
  }
}

TEST_CASE("synth_brir is deterministic and azimuth-mirrored") {
  RoomProfile profile;
  const Brir a1 = synth_brir(7, profile, 42.0);
  const Brir a2 = synth_brir(7, profile, 42.0);
  REQUIRE(a1.size() == a2.size());
  for (std::size_t i = 0; i < a1.size(); ++i) {
    CHECK(a1.left[i] == a2.left[i]);
    CHECK(a1.right[i] == a2.right[i]);
  }

  const Brir mirrored = synth_brir(7, profile, -42.0);
  for (std::size_t i = 0; i < a1.size(); ++i) {
    CHECK(a1.left[i] == mirrored.right[i]);
    CHECK(a1.right[i] == mirrored.left[i]);
  }
}

TEST_CASE("synth_brir interaural geometry") {
  RoomProfile profile;
  const Brir center = synth_brir(3, profile, 0.0);
  // Zero azimuth: direct arrivals coincide.
  std::size_t l_peak = 0, r_peak = 0;
  for (std::size_t i = 1; i < center.size(); ++i) {
    if (std::abs(center.left[i]) > std::abs(center.left[l_peak])) l_peak = i;
    if (std::abs(center.right[i]) > std::abs(center.right[r_peak])) r_peak = i;
  }
  CHECK(l_peak == r_peak);

  // Source on the right: right ear leads and is louder.
  const Brir side = synth_brir(3, profile, 90.0);
  std::size_t sl = 0, sr = 0;
  for (std::size_t i = 1; i < side.size(); ++i) {
    if (std::abs(side.left[i]) > std::abs(side.left[sl])) sl = i;
    if (std::abs(side.right[i]) > std::abs(side.right[sr])) sr = i;
  }
  CHECK(sr < sl);
  CHECK(std::abs(side.right[sr]) > std::abs(side.left[sl]));
  const double itd_ms = static_cast<double>(sl - sr) / kSampleRate * 1000.0;
  CHECK(itd_ms > 0.4);
  CHECK(itd_ms < 0.8);
}

TEST_CASE("synth_brir decay matches the requested rt60 within 20 percent") {
  for (double rt60 : {0.3, 0.5, 0.8}) {
    RoomProfile profile;
    profile.rt60_s = rt60;
    const Brir b = synth_brir(19, profile, 10.0);
    const double measured = edc_rt60(b);
    CHECK(measured > 0.8 * rt60);
    CHECK(measured < 1.2 * rt60);
  }
  CHECK_THROWS(synth_brir(1, RoomProfile{.rt60_s = 0.0}, 0.0));
}
