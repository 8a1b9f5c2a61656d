#include "gengap/fft.hpp"

#include <cmath>
#include <stdexcept>

namespace gengap {

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft(std::vector<std::complex<double>>& data, bool inverse) {
  const std::size_t n = data.size();
  if (n == 0) return;
  if ((n & (n - 1)) != 0) throw std::invalid_argument("fft: size must be a power of two");

  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = data[i + k];
        const std::complex<double> v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }

  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& x : data) x *= scale;
  }
}

Signal fft_convolve(const Signal& a, const Signal& b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_len = a.size() + b.size() - 1;
  const std::size_t n = next_pow2(out_len);

  std::vector<std::complex<double>> fa(n), fb(n);
  for (std::size_t i = 0; i < a.size(); ++i) fa[i] = a[i];
  for (std::size_t i = 0; i < b.size(); ++i) fb[i] = b[i];
  fft(fa);
  fft(fb);
  for (std::size_t i = 0; i < n; ++i) fa[i] *= fb[i];
  fft(fa, true);

  Signal out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = fa[i].real();
  return out;
}

Signal convolve_same_length(const Signal& signal, const Signal& kernel) {
  Signal full = fft_convolve(signal, kernel);
  full.resize(signal.size());
  return full;
}

std::vector<std::complex<double>> forward_fft_padded(const Signal& signal,
                                                     std::size_t fft_size) {
  if (fft_size < signal.size())
    throw std::invalid_argument("forward_fft_padded: fft_size smaller than the signal");
  std::vector<std::complex<double>> out(fft_size);
  for (std::size_t i = 0; i < signal.size(); ++i) out[i] = signal[i];
  fft(out);
  return out;
}

std::vector<std::complex<double>> packed_pair_spectrum(const Signal& left, const Signal& right,
                                                       std::size_t fft_size) {
  if (left.size() != right.size())
    throw std::invalid_argument("packed_pair_spectrum: kernel length mismatch");
  if (fft_size < left.size())
    throw std::invalid_argument("packed_pair_spectrum: fft_size smaller than the kernels");
  std::vector<std::complex<double>> out(fft_size);
  for (std::size_t i = 0; i < left.size(); ++i) out[i] = {left[i], right[i]};
  fft(out);
  return out;
}

Stereo convolve_with_packed(const std::vector<std::complex<double>>& signal_fft,
                            const std::vector<std::complex<double>>& pair_fft,
                            std::size_t out_len) {
  if (signal_fft.size() != pair_fft.size())
    throw std::invalid_argument("convolve_with_packed: size mismatch");
  std::vector<std::complex<double>> prod(signal_fft.size());
  for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = signal_fft[i] * pair_fft[i];
  fft(prod, true);
  Stereo out;
  out.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    out.left[i] = prod[i].real();
    out.right[i] = prod[i].imag();
  }
  return out;
}

}  // namespace gengap
