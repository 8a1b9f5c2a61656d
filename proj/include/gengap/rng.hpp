#ifndef GENGAP_RNG_HPP
#define GENGAP_RNG_HPP

#include <cstdint>
#include <random>
#include <string>

namespace gengap {

// Seed derivation for reproducible pipelines. Every randomized stage gets its
// own seed derived from the master seed and a path of tokens, so results do
// not depend on scheduling or on how many draws other stages consumed.
uint64_t mix_seed(uint64_t seed, uint64_t token);
uint64_t mix_seed(uint64_t seed, const std::string& token);

template <typename T, typename... Rest>
uint64_t derive_seed(uint64_t seed, const T& first, const Rest&... rest) {
  uint64_t s = mix_seed(seed, first);
  if constexpr (sizeof...(rest) == 0) {
    return s;
  } else {
    return derive_seed(s, rest...);
  }
}

// mt19937_64 with pinned draw functions. The standard distributions are not
// bit-identical across library implementations, so uniform/normal are
// implemented here directly.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer on [0, n).
  uint64_t below(uint64_t n);

  // Standard normal via Box-Muller; second value cached.
  double normal();

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace gengap

#endif  // GENGAP_RNG_HPP
