#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dfn {

using cfloat = std::complex<float>;
using cdouble = std::complex<double>;

// Fixed operating point: 48 kHz, 20 ms window, 10 ms hop.
inline constexpr int kSampleRate = 48000;
inline constexpr int kWindowLen = 960;
inline constexpr int kHopLen = 480;
inline constexpr int kFftLen = 960;
inline constexpr int kBins = kFftLen / 2 + 1;  // 481
inline constexpr double kBinHz = static_cast<double>(kSampleRate) / kFftLen;

// Raised when a computation produces (or is fed) NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what, std::ptrdiff_t bin = -1)
      : std::runtime_error(what), bin_(bin) {}
  // Offending bin index, or -1 when not tied to a bin.
  std::ptrdiff_t bin() const noexcept { return bin_; }

 private:
  std::ptrdiff_t bin_;
};

struct StftConfig {
  int sample_rate_hz = kSampleRate;
  int window_len = kWindowLen;
  int hop_len = kHopLen;
  int fft_len = kFftLen;
  int lookahead_frames = 2;

  int bin_count() const { return fft_len / 2 + 1; }

  // Only the 48 kHz / 960 / 480 geometry is supported; look-ahead is free.
  void validate() const {
    if (sample_rate_hz != kSampleRate || window_len != kWindowLen ||
        hop_len != kHopLen || fft_len != kFftLen)
      throw std::invalid_argument(
          "stft: only 48000 Hz / 960-sample window / 480-sample hop is supported");
    if (lookahead_frames < 0)
      throw std::invalid_argument("stft: lookahead_frames must be >= 0");
  }

  friend bool operator==(const StftConfig&, const StftConfig&) = default;
};

// Algorithmic latency: one full window plus the look-ahead hops.
constexpr int latency_samples(const StftConfig& cfg) {
  return cfg.window_len + cfg.lookahead_frames * cfg.hop_len;
}

// One STFT frame. Holds X, S, Z or Y depending on the caller.
struct Spectrum {
  std::array<cfloat, kBins> bins{};
  std::int64_t frame_index = 0;

  static constexpr std::size_t size() { return kBins; }
  cfloat& operator[](std::size_t k) { return bins[k]; }
  const cfloat& operator[](std::size_t k) const { return bins[k]; }

  void clear() { bins.fill(cfloat{}); }
};

}  // namespace dfn
