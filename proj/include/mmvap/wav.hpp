#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "mmvap/error.hpp"

namespace mmvap {

constexpr int kAudioRateHz = 16000;

struct AudioBuffer {
  int sample_rate = kAudioRateHz;
  std::vector<double> samples;  // mono, [-1, 1]

  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

namespace detail {

inline uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}

inline void write_u16(std::ostream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace detail

/// Linear resampling; output sample k is the input evaluated at k*in_rate/out_rate.
inline std::vector<double> resample_linear(const std::vector<double>& in, int in_rate,
                                           int out_rate) {
  if (in_rate == out_rate || in.empty()) return in;
  size_t n_out = static_cast<size_t>(static_cast<double>(in.size()) * out_rate / in_rate);
  std::vector<double> out(n_out);
  for (size_t k = 0; k < n_out; ++k) {
    double pos = static_cast<double>(k) * in_rate / out_rate;
    size_t i = static_cast<size_t>(pos);
    double frac = pos - static_cast<double>(i);
    double a = in[std::min(i, in.size() - 1)];
    double b = in[std::min(i + 1, in.size() - 1)];
    out[k] = a + frac * (b - a);
  }
  return out;
}

/// Reads a 16-bit PCM WAV; multi-channel input is averaged to mono and
/// non-16 kHz rates are resampled on load.
inline AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    throw Error(ErrorCode::IoError, "not a RIFF file: " + path.string());
  detail::read_u32(in);  // riff size
  in.read(tag, 4);
  if (std::memcmp(tag, "WAVE", 4) != 0)
    throw Error(ErrorCode::IoError, "not a WAVE file: " + path.string());

  uint16_t channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<int16_t> data;
  while (in.read(tag, 4)) {
    uint32_t size = detail::read_u32(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      uint16_t fmt = detail::read_u16(in);
      channels = detail::read_u16(in);
      rate = detail::read_u32(in);
      detail::read_u32(in);  // byte rate
      detail::read_u16(in);  // block align
      bits = detail::read_u16(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      if (fmt != 1 || bits != 16)
        throw Error(ErrorCode::IoError, "only 16-bit PCM WAV supported: " + path.string());
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data.resize(size / 2);
      in.read(reinterpret_cast<char*>(data.data()), size);
      break;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (rate == 0 || channels == 0) throw Error(ErrorCode::IoError, "missing fmt chunk");

  AudioBuffer buf;
  size_t n = data.size() / channels;
  std::vector<double> mono(n);
  for (size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (size_t c = 0; c < channels; ++c) acc += static_cast<double>(data[i * channels + c]);
    mono[i] = acc / (32768.0 * channels);
  }
  buf.sample_rate = kAudioRateHz;
  buf.samples = resample_linear(mono, static_cast<int>(rate), kAudioRateHz);
  return buf;
}

inline void write_wav(const std::filesystem::path& path, const AudioBuffer& buf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  uint32_t data_bytes = static_cast<uint32_t>(buf.samples.size() * 2);
  out.write("RIFF", 4);
  detail::write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  detail::write_u32(out, 16);
  detail::write_u16(out, 1);  // PCM
  detail::write_u16(out, 1);  // mono
  detail::write_u32(out, static_cast<uint32_t>(buf.sample_rate));
  detail::write_u32(out, static_cast<uint32_t>(buf.sample_rate * 2));
  detail::write_u16(out, 2);
  detail::write_u16(out, 16);
  out.write("data", 4);
  detail::write_u32(out, data_bytes);
  for (double s : buf.samples) {
    double clamped = std::max(-1.0, std::min(1.0, s));
    int16_t v = static_cast<int16_t>(std::lround(clamped * 32767.0));
    detail::write_u16(out, static_cast<uint16_t>(v));
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

}  // namespace mmvap
