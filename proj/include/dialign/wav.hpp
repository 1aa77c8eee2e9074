#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "dialign/error.hpp"

namespace dialign {

inline constexpr int kSampleRateHz = 16000;

struct AudioBuffer {
  std::vector<float> samples;  // mono, nominally in [-1, 1]
  int sample_rate_hz = kSampleRateHz;

  double duration_s() const {
    return sample_rate_hz > 0
               ? static_cast<double>(samples.size()) / sample_rate_hz
               : 0.0;
  }
};

struct WavReadOptions {
  /// Reject files whose rate differs from target_rate_hz instead of
  /// resampling them.
  bool strict = false;
  int target_rate_hz = kSampleRateHz;
};

/// Parsed "fmt " and "data" chunk locations of a RIFF/WAVE file.
struct WavInfo {
  int format = 0;  // 1 = PCM, 3 = IEEE float
  int channels = 0;
  int sample_rate_hz = 0;
  int bits_per_sample = 0;
  std::size_t data_offset = 0;
  std::size_t data_bytes = 0;

  std::size_t num_frames() const {
    const std::size_t frame = static_cast<std::size_t>(channels) * (bits_per_sample / 8);
    return frame == 0 ? 0 : data_bytes / frame;
  }
  double duration_s() const {
    return sample_rate_hz > 0 ? static_cast<double>(num_frames()) / sample_rate_hz : 0.0;
  }
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) |
         (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_u16le(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw runtime_error("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace detail

/// Walks the RIFF chunk list. Accepts WAVE_FORMAT_EXTENSIBLE by reading the
/// format tag from its sub-format GUID.
inline WavInfo parse_wav_header(std::span<const unsigned char> bytes) {
  using detail::read_u16le;
  using detail::read_u32le;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw validation_error("corrupt WAV header: missing RIFF/WAVE signature");
  }
  WavInfo info;
  bool have_fmt = false, have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::size_t size = read_u32le(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size())
        throw validation_error("corrupt WAV header: truncated fmt chunk");
      const unsigned char* f = bytes.data() + body;
      info.format = read_u16le(f);
      info.channels = read_u16le(f + 2);
      info.sample_rate_hz = static_cast<int>(read_u32le(f + 4));
      info.bits_per_sample = read_u16le(f + 14);
      if (info.format == 0xFFFE) {
        if (size < 40) throw validation_error("corrupt WAV header: short extensible fmt");
        info.format = read_u16le(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      info.data_offset = body;
      // Streamed writers sometimes leave the size as 0 or 0xFFFFFFFF.
      info.data_bytes = std::min(size, bytes.size() - body);
      have_data = true;
      break;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw validation_error("corrupt WAV header: no fmt chunk");
  if (!have_data) throw validation_error("corrupt WAV header: no data chunk");
  if (info.channels <= 0 || info.sample_rate_hz <= 0)
    throw validation_error("corrupt WAV header: bad channel count or sample rate");
  const bool pcm16 = info.format == 1 && info.bits_per_sample == 16;
  const bool f32 = info.format == 3 && info.bits_per_sample == 32;
  if (!pcm16 && !f32) {
    throw validation_error("unsupported WAV codec: format " + std::to_string(info.format) +
                           ", " + std::to_string(info.bits_per_sample) + " bits");
  }
  return info;
}

/// Linear-interpolation resampler.
inline std::vector<float> resample_linear(std::span<const float> in, int from_hz, int to_hz) {
  if (from_hz == to_hz || in.empty()) return {in.begin(), in.end()};
  const std::size_t out_n = static_cast<std::size_t>(
      std::floor(static_cast<double>(in.size()) * to_hz / from_hz));
  std::vector<float> out(out_n);
  const double step = static_cast<double>(from_hz) / to_hz;
  for (std::size_t i = 0; i < out_n; ++i) {
    const double src = i * step;
    const std::size_t k = static_cast<std::size_t>(src);
    const double frac = src - k;
    const float a = in[std::min(k, in.size() - 1)];
    const float b = in[std::min(k + 1, in.size() - 1)];
    out[i] = static_cast<float>(a + (b - a) * frac);
  }
  return out;
}

/// Decodes an in-memory WAV image to a mono buffer. 16-bit samples are scaled
/// by 1/32768, so -32768 maps to exactly -1.0.
inline AudioBuffer decode_wav(std::span<const unsigned char> bytes,
                              const WavReadOptions& opts = {}) {
  const WavInfo info = parse_wav_header(bytes);
  const std::size_t frames = info.num_frames();
  const int ch = info.channels;
  const unsigned char* data = bytes.data() + info.data_offset;

  AudioBuffer out;
  out.sample_rate_hz = info.sample_rate_hz;
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < ch; ++c) {
      const std::size_t idx = i * ch + c;
      if (info.format == 1) {
        const auto raw = static_cast<std::int16_t>(detail::read_u16le(data + 2 * idx));
        acc += raw / 32768.0;
      } else {
        acc += std::bit_cast<float>(detail::read_u32le(data + 4 * idx));
      }
    }
    out.samples[i] = static_cast<float>(acc / ch);
  }

  if (opts.target_rate_hz > 0 && out.sample_rate_hz != opts.target_rate_hz) {
    if (opts.strict) {
      throw validation_error("sample-rate mismatch: " + std::to_string(out.sample_rate_hz) +
                             " Hz, expected " + std::to_string(opts.target_rate_hz) + " Hz");
    }
    out.samples = resample_linear(out.samples, out.sample_rate_hz, opts.target_rate_hz);
    out.sample_rate_hz = opts.target_rate_hz;
  }
  return out;
}

inline AudioBuffer decode_wav(const std::filesystem::path& path, const WavReadOptions& opts = {}) {
  const auto bytes = detail::read_file_bytes(path);
  try {
    return decode_wav(std::span<const unsigned char>(bytes), opts);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

/// Reads only as much of the file as needed to get the duration.
inline double wav_duration_s(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw runtime_error("cannot open " + path.string());
  std::vector<unsigned char> head(4096);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  WavInfo info = parse_wav_header(head);
  // The header scan clipped data_bytes to what was read; use the real size.
  const auto file_size = std::filesystem::file_size(path);
  const std::size_t declared = detail::read_u32le(head.data() + info.data_offset - 4);
  info.data_bytes = std::min<std::size_t>(declared, file_size - info.data_offset);
  return info.duration_s();
}

enum class WavEncoding { kPcm16, kFloat32 };

inline std::vector<unsigned char> encode_wav(std::span<const float> samples, int sample_rate_hz,
                                             int channels = 1,
                                             WavEncoding enc = WavEncoding::kPcm16) {
  using detail::put_u16le;
  using detail::put_u32le;
  const int bits = enc == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * (bits / 8));
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32le(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32le(out, 16);
  put_u16le(out, enc == WavEncoding::kPcm16 ? 1 : 3);
  put_u16le(out, static_cast<std::uint16_t>(channels));
  put_u32le(out, static_cast<std::uint32_t>(sample_rate_hz));
  put_u32le(out, static_cast<std::uint32_t>(sample_rate_hz * channels * (bits / 8)));
  put_u16le(out, static_cast<std::uint16_t>(channels * (bits / 8)));
  put_u16le(out, static_cast<std::uint16_t>(bits));
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32le(out, data_bytes);
  for (float s : samples) {
    if (enc == WavEncoding::kPcm16) {
      const double v = std::clamp(std::round(static_cast<double>(s) * 32768.0), -32768.0, 32767.0);
      put_u16le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
    } else {
      put_u32le(out, std::bit_cast<std::uint32_t>(s));
    }
  }
  return out;
}

/// Writes interleaved samples as a WAV file.
inline void write_wav(const std::filesystem::path& path, std::span<const float> samples,
                      int sample_rate_hz, int channels = 1,
                      WavEncoding enc = WavEncoding::kPcm16) {
  const auto bytes = encode_wav(samples, sample_rate_hz, channels, enc);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace dialign
