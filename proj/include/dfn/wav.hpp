#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfn::wav {

enum class SampleFormat : std::uint16_t { pcm16 = 1, float32 = 3 };

// Structurally broken or unreadable file.
class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Readable, but not a format we accept (rate, channels, encoding).
class FormatError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Audio {
  int sample_rate = 48000;
  int channels = 1;
  SampleFormat format = SampleFormat::float32;
  std::vector<float> samples;  // interleaved when channels > 1
};

namespace detail {

inline std::uint32_t u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

inline void put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace detail

// Parses RIFF/WAVE with a PCM16 or IEEE-float32 fmt chunk.
inline Audio parse(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw IoError("not a RIFF/WAVE file");

  Audio a;
  bool have_fmt = false;
  int bits = 0;
  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const std::uint32_t size = detail::u32(p + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > n) throw IoError("truncated chunk");
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (size < 16) throw IoError("fmt chunk too short");
      const std::uint16_t tag = detail::u16(p + body);
      a.channels = detail::u16(p + body + 2);
      a.sample_rate = static_cast<int>(detail::u32(p + body + 4));
      bits = detail::u16(p + body + 14);
      if (tag == 1 && bits == 16) {
        a.format = SampleFormat::pcm16;
      } else if (tag == 3 && bits == 32) {
        a.format = SampleFormat::float32;
      } else {
        throw FormatError("unsupported WAV encoding (need PCM16 or float32)");
      }
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_fmt) throw IoError("data chunk before fmt chunk");
      const std::size_t width = bits / 8;
      const std::size_t count = size / width;
      a.samples.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const unsigned char* s = p + body + i * width;
        if (a.format == SampleFormat::pcm16) {
          a.samples[i] = static_cast<std::int16_t>(detail::u16(s)) / 32768.0f;
        } else {
          a.samples[i] = std::bit_cast<float>(detail::u32(s));
        }
      }
      return a;
    }
    pos = body + size + (size & 1);
  }
  throw IoError(have_fmt ? "missing data chunk" : "missing fmt chunk");
}

inline Audio read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse(bytes);
}

inline std::int16_t to_pcm16(float v) {
  if (!std::isfinite(v)) return 0;
  const float scaled = std::round(v * 32768.0f);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0f, 32767.0f));
}

inline std::string serialize(const Audio& a) {
  const std::uint16_t width = a.format == SampleFormat::pcm16 ? 2 : 4;
  const auto data_size = static_cast<std::uint32_t>(a.samples.size() * width);
  std::string s;
  s.reserve(44 + data_size);
  s += "RIFF";
  detail::put32(s, 36 + data_size);
  s += "WAVEfmt ";
  detail::put32(s, 16);
  detail::put16(s, static_cast<std::uint16_t>(a.format));
  detail::put16(s, static_cast<std::uint16_t>(a.channels));
  detail::put32(s, static_cast<std::uint32_t>(a.sample_rate));
  detail::put32(s, static_cast<std::uint32_t>(a.sample_rate * a.channels * width));
  detail::put16(s, static_cast<std::uint16_t>(a.channels * width));
  detail::put16(s, static_cast<std::uint16_t>(width * 8));
  s += "data";
  detail::put32(s, data_size);
  for (float v : a.samples) {
    if (a.format == SampleFormat::pcm16) {
      detail::put16(s, static_cast<std::uint16_t>(to_pcm16(v)));
    } else {
      detail::put32(s, std::bit_cast<std::uint32_t>(v));
    }
  }
  return s;
}

inline void write(const std::string& path, const Audio& a) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  const std::string bytes = serialize(a);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path);
}

}  // namespace dfn::wav
