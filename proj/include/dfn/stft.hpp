#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "dfn/spectrum.hpp"

namespace dfn {

namespace detail {

// FFTW's planner is not thread-safe; execution with the new-array API is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

template <class T>
struct FftwFree {
  void operator()(T* p) const { fftw_free(p); }
};

// Real FFT of fixed length with owned, aligned buffers.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    time_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    freq_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    if (!time_ || !freq_) throw std::bad_alloc();
    std::lock_guard lock(fftw_planner_mutex());
    fwd_ = fftw_plan_dft_r2c_1d(n, time_, freq_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(n, freq_, time_, FFTW_ESTIMATE);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  RealFft(RealFft&& o) noexcept { swap(o); }
  RealFft& operator=(RealFft&& o) noexcept {
    swap(o);
    return *this;
  }
  ~RealFft() {
    if (fwd_ || inv_) {
      std::lock_guard lock(fftw_planner_mutex());
      if (fwd_) fftw_destroy_plan(fwd_);
      if (inv_) fftw_destroy_plan(inv_);
    }
    fftw_free(time_);
    fftw_free(freq_);
  }

  int size() const { return n_; }
  double* time() { return time_; }
  fftw_complex* freq() { return freq_; }

  // time() -> freq(), unnormalized.
  void forward() { fftw_execute_dft_r2c(fwd_, time_, freq_); }
  // freq() -> time(), unnormalized (caller divides by n). Clobbers freq().
  void inverse() { fftw_execute_dft_c2r(inv_, freq_, time_); }

 private:
  void swap(RealFft& o) noexcept {
    std::swap(n_, o.n_);
    std::swap(time_, o.time_);
    std::swap(freq_, o.freq_);
    std::swap(fwd_, o.fwd_);
    std::swap(inv_, o.inv_);
  }

  int n_ = 0;
  double* time_ = nullptr;
  fftw_complex* freq_ = nullptr;
  fftw_plan fwd_ = nullptr;
  fftw_plan inv_ = nullptr;
};

}  // namespace detail

// Periodic square-root Hann window; its square overlap-adds to exactly 1 at 50% hop.
inline std::vector<double> sqrt_hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = std::sin(std::numbers::pi * i / n);
  return w;
}

// Streaming analysis: keeps the last window_len samples and emits one
// windowed DFT per hop.
class StftAnalyzer {
 public:
  explicit StftAnalyzer(const StftConfig& cfg = {})
      : cfg_((cfg.validate(), cfg)),
        window_(sqrt_hann_window(cfg.window_len)),
        input_(cfg.window_len, 0.0),
        fft_(cfg.fft_len) {}

  const StftConfig& config() const { return cfg_; }
  std::span<const double> window() const { return window_; }
  std::int64_t frames() const { return next_frame_; }

  void reset() {
    std::fill(input_.begin(), input_.end(), 0.0);
    next_frame_ = 0;
  }

  void analyze(std::span<const float> hop, Spectrum& out) {
    const int hop_len = cfg_.hop_len;
    if (static_cast<int>(hop.size()) != hop_len)
      throw std::invalid_argument("analyze: hop must contain exactly hop_len samples");
    std::copy(input_.begin() + hop_len, input_.end(), input_.begin());
    std::copy(hop.begin(), hop.end(), input_.end() - hop_len);

    double* t = fft_.time();
    for (int i = 0; i < cfg_.window_len; ++i) t[i] = input_[i] * window_[i];
    fft_.forward();
    const fftw_complex* f = fft_.freq();
    for (int k = 0; k < kBins; ++k)
      out.bins[k] = cfloat(static_cast<float>(f[k][0]), static_cast<float>(f[k][1]));
    out.frame_index = next_frame_++;
  }

  Spectrum analyze(std::span<const float> hop) {
    Spectrum s;
    analyze(hop, s);
    return s;
  }

 private:
  StftConfig cfg_;
  std::vector<double> window_;
  std::vector<double> input_;
  detail::RealFft fft_;
  std::int64_t next_frame_ = 0;
};

// Streaming synthesis: inverse DFT, synthesis window, overlap-add. The
// emitted hop lags the analysis input by window_len - hop_len samples.
class StftSynthesizer {
 public:
  explicit StftSynthesizer(const StftConfig& cfg = {})
      : cfg_((cfg.validate(), cfg)),
        window_(sqrt_hann_window(cfg.window_len)),
        accum_(cfg.window_len, 0.0),
        fft_(cfg.fft_len) {}

  const StftConfig& config() const { return cfg_; }
  std::span<const double> window() const { return window_; }

  void reset() { std::fill(accum_.begin(), accum_.end(), 0.0); }

  void synthesize(const Spectrum& spec, std::span<float> out) {
    const int hop_len = cfg_.hop_len;
    const int n = cfg_.fft_len;
    if (static_cast<int>(out.size()) != hop_len)
      throw std::invalid_argument("synthesize: output must hold exactly hop_len samples");
    fftw_complex* f = fft_.freq();
    for (int k = 0; k < kBins; ++k) {
      const cfloat v = spec.bins[k];
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
        throw NumericError("synthesize: non-finite bin value", k);
      f[k][0] = v.real();
      f[k][1] = v.imag();
    }
    fft_.inverse();
    const double* t = fft_.time();
    const double scale = 1.0 / n;
    for (int i = 0; i < cfg_.window_len; ++i) accum_[i] += t[i] * scale * window_[i];

    for (int i = 0; i < hop_len; ++i) out[i] = static_cast<float>(accum_[i]);
    std::copy(accum_.begin() + hop_len, accum_.end(), accum_.begin());
    std::fill(accum_.end() - hop_len, accum_.end(), 0.0);
  }

  std::vector<float> synthesize(const Spectrum& spec) {
    std::vector<float> out(cfg_.hop_len);
    synthesize(spec, out);
    return out;
  }

 private:
  StftConfig cfg_;
  std::vector<double> window_;
  std::vector<double> accum_;
  detail::RealFft fft_;
};

}  // namespace dfn
