#include "gengap/wav.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace gengap {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;

static_assert(std::endian::native == std::endian::little,
              "WAV code assumes a little-endian host");

struct FmtChunk {
  uint16_t format = 0;
  uint16_t channels = 0;
  uint32_t sample_rate = 0;
  uint16_t bits_per_sample = 0;
};

void put_u32(std::ofstream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

void put_u16(std::ofstream& out, uint16_t v) {
  out.write(reinterpret_cast<const char*>(&v), 2);
}

uint32_t get_u32(std::ifstream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

uint16_t get_u16(std::ifstream& in) {
  uint16_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 2);
  return v;
}

// Parses the header up to the data chunk. Leaves the stream positioned at the
// first sample and returns the data chunk byte size.
uint32_t parse_header(std::ifstream& in, const std::filesystem::path& path, FmtChunk* fmt) {
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    throw std::runtime_error("not a RIFF file: " + path.string());
  get_u32(in);  // riff size, unused
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0)
    throw std::runtime_error("not a WAVE file: " + path.string());

  bool have_fmt = false;
  while (in.read(tag, 4)) {
    uint32_t chunk_size = get_u32(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      fmt->format = get_u16(in);
      fmt->channels = get_u16(in);
      fmt->sample_rate = get_u32(in);
      get_u32(in);  // byte rate
      get_u16(in);  // block align
      fmt->bits_per_sample = get_u16(in);
      if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw std::runtime_error("data chunk before fmt: " + path.string());
      return chunk_size;
    } else {
      // Skip unknown chunk, padded to even size.
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  throw std::runtime_error("no data chunk: " + path.string());
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  FmtChunk fmt;
  uint32_t data_size = parse_header(in, path, &fmt);
  if (fmt.channels == 0) throw std::runtime_error("zero channels: " + path.string());

  const uint32_t bytes_per_sample = fmt.bits_per_sample / 8;
  if (bytes_per_sample == 0) throw std::runtime_error("bad bits per sample: " + path.string());
  const std::size_t n_frames = data_size / (bytes_per_sample * fmt.channels);

  WavData wav;
  wav.sample_rate = static_cast<int>(fmt.sample_rate);
  wav.channels.assign(fmt.channels, Signal(n_frames));

  std::vector<char> raw(data_size);
  in.read(raw.data(), static_cast<std::streamsize>(data_size));
  if (!in) throw std::runtime_error("truncated data chunk: " + path.string());

  if (fmt.format == kFormatFloat && fmt.bits_per_sample == 32) {
    const float* p = reinterpret_cast<const float*>(raw.data());
    for (std::size_t i = 0; i < n_frames; ++i)
      for (uint16_t c = 0; c < fmt.channels; ++c) wav.channels[c][i] = p[i * fmt.channels + c];
  } else if (fmt.format == kFormatPcm && fmt.bits_per_sample == 16) {
    const int16_t* p = reinterpret_cast<const int16_t*>(raw.data());
    for (std::size_t i = 0; i < n_frames; ++i)
      for (uint16_t c = 0; c < fmt.channels; ++c)
        wav.channels[c][i] = p[i * fmt.channels + c] / 32768.0;
  } else {
    throw std::runtime_error("unsupported WAV encoding (" + std::to_string(fmt.format) + "/" +
                             std::to_string(fmt.bits_per_sample) + " bit): " + path.string());
  }
  return wav;
}

void write_wav(const std::filesystem::path& path, const std::vector<Signal>& channels,
               int sample_rate) {
  if (channels.empty()) throw std::invalid_argument("write_wav: no channels");
  const std::size_t n_frames = channels[0].size();
  for (const auto& c : channels)
    if (c.size() != n_frames) throw std::invalid_argument("write_wav: channel length mismatch");

  const uint16_t n_channels = static_cast<uint16_t>(channels.size());
  const uint32_t data_size = static_cast<uint32_t>(n_frames * n_channels * 4);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());

  out.write("RIFF", 4);
  put_u32(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(out, 16);
  put_u16(out, kFormatFloat);
  put_u16(out, n_channels);
  put_u32(out, static_cast<uint32_t>(sample_rate));
  put_u32(out, static_cast<uint32_t>(sample_rate) * n_channels * 4);
  put_u16(out, n_channels * 4);
  put_u16(out, 32);
  out.write("data", 4);
  put_u32(out, data_size);

  std::vector<float> interleaved(n_frames * n_channels);
  for (std::size_t i = 0; i < n_frames; ++i)
    for (uint16_t c = 0; c < n_channels; ++c)
      interleaved[i * n_channels + c] = static_cast<float>(channels[c][i]);
  out.write(reinterpret_cast<const char*>(interleaved.data()), data_size);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_wav_mono(const std::filesystem::path& path, const Signal& s, int sample_rate) {
  write_wav(path, {s}, sample_rate);
}

void write_wav_stereo(const std::filesystem::path& path, const Stereo& s, int sample_rate) {
  write_wav(path, {s.left, s.right}, sample_rate);
}

WavInfo probe_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  FmtChunk fmt;
  uint32_t data_size = parse_header(in, path, &fmt);
  WavInfo info;
  info.sample_rate = static_cast<int>(fmt.sample_rate);
  info.channels = fmt.channels;
  info.frames = data_size / (fmt.bits_per_sample / 8 * fmt.channels);
  return info;
}

Signal read_wav_mono(const std::filesystem::path& path, int expected_rate) {
  WavData wav = read_wav(path);
  if (wav.sample_rate != expected_rate)
    throw std::runtime_error("expected " + std::to_string(expected_rate) + " Hz, got " +
                             std::to_string(wav.sample_rate) + ": " + path.string());
  if (wav.channels.size() != 1)
    throw std::runtime_error("expected mono: " + path.string());
  return std::move(wav.channels[0]);
}

Stereo read_wav_stereo(const std::filesystem::path& path, int expected_rate) {
  WavData wav = read_wav(path);
  if (wav.sample_rate != expected_rate)
    throw std::runtime_error("expected " + std::to_string(expected_rate) + " Hz, got " +
                             std::to_string(wav.sample_rate) + ": " + path.string());
  if (wav.channels.size() != 2)
    throw std::runtime_error("expected stereo: " + path.string());
  return Stereo{std::move(wav.channels[0]), std::move(wav.channels[1])};
}

}  // namespace gengap
