#ifndef GENGAP_COMMON_HPP
#define GENGAP_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gengap {

// All audio in this toolkit is processed at a fixed rate. Files with a
// different rate are rejected at load time rather than resampled.
inline constexpr int kSampleRate = 16000;

using Signal = std::vector<double>;

struct Stereo {
  Signal left;
  Signal right;

  std::size_t size() const { return left.size(); }
  void resize(std::size_t n) {
    left.resize(n);
    right.resize(n);
  }
};

// (L+R)/2, the single-channel signal models and metrics operate on.
inline Signal channel_average(const Stereo& s) {
  Signal out(s.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (s.left[i] + s.right[i]);
  return out;
}

inline double energy(const Signal& s) {
  double e = 0.0;
  for (double x : s) e += x * x;
  return e;
}

// Summed over both channels.
inline double energy(const Stereo& s) { return energy(s.left) + energy(s.right); }

inline double db_to_linear_power(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_power_to_db(double p) { return 10.0 * std::log10(p); }

inline Signal& add_in_place(Signal& a, const Signal& b) {
  if (a.size() != b.size()) throw std::invalid_argument("add_in_place: length mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline Stereo& add_in_place(Stereo& a, const Stereo& b) {
  add_in_place(a.left, b.left);
  add_in_place(a.right, b.right);
  return a;
}

inline void scale_in_place(Signal& s, double g) {
  for (double& x : s) x *= g;
}

inline void scale_in_place(Stereo& s, double g) {
  scale_in_place(s.left, g);
  scale_in_place(s.right, g);
}

}  // namespace gengap

#endif  // GENGAP_COMMON_HPP
