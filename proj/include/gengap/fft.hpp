#ifndef GENGAP_FFT_HPP
#define GENGAP_FFT_HPP

#include <complex>
#include <vector>

#include "gengap/common.hpp"

namespace gengap {

// In-place iterative radix-2 FFT. Size must be a power of two.
void fft(std::vector<std::complex<double>>& data, bool inverse = false);

std::size_t next_pow2(std::size_t n);

// Linear convolution via zero-padded FFT, output length a.size()+b.size()-1.
Signal fft_convolve(const Signal& a, const Signal& b);

// Linear convolution truncated to the length of the first argument. Keeps the
// leading part, so time alignment with the input is preserved.
Signal convolve_same_length(const Signal& signal, const Signal& kernel);

// FFT of a zero-padded real signal. fft_size must be a power of two at least
// signal.size().
std::vector<std::complex<double>> forward_fft_padded(const Signal& signal, std::size_t fft_size);

// Two real kernels packed as left + i*right in a single transform; convolving
// a real signal against the pair then costs one inverse transform.
std::vector<std::complex<double>> packed_pair_spectrum(const Signal& left, const Signal& right,
                                                       std::size_t fft_size);

// Inverse of signal_fft .* pair_fft, split back into the two real outputs and
// truncated to out_len. fft_size must cover the full linear convolution.
Stereo convolve_with_packed(const std::vector<std::complex<double>>& signal_fft,
                            const std::vector<std::complex<double>>& pair_fft,
                            std::size_t out_len);

}  // namespace gengap

#endif  // GENGAP_FFT_HPP
