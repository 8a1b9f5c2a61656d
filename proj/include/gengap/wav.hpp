#ifndef GENGAP_WAV_HPP
#define GENGAP_WAV_HPP

#include <filesystem>
#include <vector>

#include "gengap/common.hpp"

namespace gengap {

struct WavData {
  int sample_rate = 0;
  // One vector per channel, deinterleaved.
  std::vector<Signal> channels;

  std::size_t frames() const { return channels.empty() ? 0 : channels[0].size(); }
};

// Reads a RIFF/WAVE file. Supports 32-bit IEEE float and 16-bit PCM.
WavData read_wav(const std::filesystem::path& path);

// Writes 32-bit IEEE float samples. All channels must have equal length.
void write_wav(const std::filesystem::path& path, const std::vector<Signal>& channels,
               int sample_rate = kSampleRate);

void write_wav_mono(const std::filesystem::path& path, const Signal& s,
                    int sample_rate = kSampleRate);
void write_wav_stereo(const std::filesystem::path& path, const Stereo& s,
                      int sample_rate = kSampleRate);

struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  std::size_t frames = 0;
};

// Header-only probe, without decoding samples.
WavInfo probe_wav(const std::filesystem::path& path);

Signal read_wav_mono(const std::filesystem::path& path, int expected_rate = kSampleRate);
Stereo read_wav_stereo(const std::filesystem::path& path, int expected_rate = kSampleRate);

}  // namespace gengap

#endif  // GENGAP_WAV_HPP
