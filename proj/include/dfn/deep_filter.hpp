#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dfn/spectrum.hpp"

namespace dfn {

struct DfConfig {
  int order_n = 5;
  int lookahead_l = 2;
  int df_bins = 96;
  float tap_cap = 10.0f;

  void validate() const {
    if (order_n < 1) throw std::invalid_argument("df: order_n must be >= 1");
    if (lookahead_l < 0 || lookahead_l >= order_n)
      throw std::invalid_argument("df: lookahead_l must satisfy 0 <= l < order_n");
    if (df_bins < 0 || df_bins > kBins) throw std::invalid_argument("df: df_bins must be in [0, 481]");
    if (!(tap_cap > 0.0f) || !std::isfinite(tap_cap))
      throw std::invalid_argument("df: tap_cap must be positive and finite");
  }

  friend bool operator==(const DfConfig&, const DfConfig&) = default;
};

// Per-bin complex filter, bin-major then tap. Tap i multiplies X(t + l - i)
// and is conjugated when applied.
class DfCoefSet {
 public:
  DfCoefSet() = default;
  DfCoefSet(int df_bins, int order_n) : bins_(df_bins), order_(order_n), w_(df_bins * order_n) {}

  static DfCoefSet zeros(const DfConfig& cfg) { return DfCoefSet(cfg.df_bins, cfg.order_n); }
  static DfCoefSet identity(const DfConfig& cfg) {
    DfCoefSet c(cfg.df_bins, cfg.order_n);
    c.set_identity(cfg.lookahead_l);
    return c;
  }

  int df_bins() const { return bins_; }
  int order_n() const { return order_; }

  cfloat& at(int bin, int tap) { return w_[bin * order_ + tap]; }
  const cfloat& at(int bin, int tap) const { return w_[bin * order_ + tap]; }
  std::span<cfloat> taps(int bin) { return {w_.data() + bin * order_, static_cast<std::size_t>(order_)}; }
  std::span<const cfloat> taps(int bin) const {
    return {w_.data() + bin * order_, static_cast<std::size_t>(order_)};
  }
  std::span<const cfloat> data() const { return w_; }
  std::span<cfloat> data() { return w_; }

  void set_zero() { std::fill(w_.begin(), w_.end(), cfloat{}); }
  void set_identity_bin(int bin, int lookahead) {
    auto t = taps(bin);
    std::fill(t.begin(), t.end(), cfloat{});
    t[lookahead] = cfloat(1.0f, 0.0f);
  }
  void set_identity(int lookahead) {
    for (int b = 0; b < bins_; ++b) set_identity_bin(b, lookahead);
  }

  bool all_finite() const {
    return std::all_of(w_.begin(), w_.end(), [](cfloat v) {
      return std::isfinite(v.real()) && std::isfinite(v.imag());
    });
  }

  // Non-finite taps become 0; magnitudes above cap are scaled down to cap.
  void clamp_magnitudes(float cap) {
    for (cfloat& v : w_) {
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
        v = {};
        continue;
      }
      const float m = std::abs(v);
      if (m > cap) v *= cap / m;
    }
  }

  friend bool operator==(const DfCoefSet&, const DfCoefSet&) = default;

 private:
  int bins_ = 0;
  int order_ = 0;
  std::vector<cfloat> w_;
};

// Anything indexable as a sequence of spectra, oldest first.
template <class W>
concept SpectrumWindow = requires(const W& w, std::size_t i) {
  { w.size() } -> std::convertible_to<std::size_t>;
  { w[i] } -> std::convertible_to<const Spectrum&>;
};

struct FrameHandle {
  std::int64_t frame = 0;
  friend bool operator==(const FrameHandle&, const FrameHandle&) = default;
};

class MultiFrameBuffer;

// View of `count` consecutive frames ending at (and including) `last`.
class FrameWindow {
 public:
  FrameWindow(const MultiFrameBuffer& buf, std::int64_t last, std::size_t count)
      : buf_(&buf), first_(last - static_cast<std::int64_t>(count) + 1), count_(count) {}
  std::size_t size() const { return count_; }
  const Spectrum& operator[](std::size_t i) const;

 private:
  const MultiFrameBuffer* buf_;
  std::int64_t first_;
  std::size_t count_;
};

// Ring of the most recent spectra. Frames before the stream start read as zero.
class MultiFrameBuffer {
 public:
  explicit MultiFrameBuffer(const DfConfig& cfg = {}, int capacity = 0)
      : cfg_((cfg.validate(), cfg)), ring_(std::max(capacity, cfg.order_n)) {}

  const DfConfig& config() const { return cfg_; }
  int capacity() const { return static_cast<int>(ring_.size()); }
  std::int64_t frames_seen() const { return frames_seen_; }
  std::int64_t newest() const { return frames_seen_ - 1; }

  void reset() {
    for (auto& s : ring_) s.clear();
    frames_seen_ = 0;
  }

  // Returns the delayed output frame t = newest - l once enough look-ahead is buffered.
  std::optional<FrameHandle> push(const Spectrum& spec) {
    Spectrum& slot = ring_[slot_of(frames_seen_)];
    slot.bins = spec.bins;
    slot.frame_index = frames_seen_;
    ++frames_seen_;
    if (frames_seen_ <= cfg_.lookahead_l) return std::nullopt;
    return FrameHandle{newest() - cfg_.lookahead_l};
  }

  const Spectrum& frame(std::int64_t index) const {
    if (index < 0) return zero_frame();
    if (index > newest() || index <= newest() - capacity())
      throw std::out_of_range("MultiFrameBuffer: frame " + std::to_string(index) + " not buffered");
    return ring_[slot_of(index)];
  }

  // i-th element of the multi-frame vector for output frame t: X(t + l - i).
  const Spectrum& tap(FrameHandle t, int i) const { return frame(t.frame + cfg_.lookahead_l - i); }

  // The `count` most recent frames, oldest first.
  FrameWindow window(std::size_t count) const {
    if (static_cast<int>(count) > capacity())
      throw std::invalid_argument("MultiFrameBuffer: window larger than capacity");
    return FrameWindow(*this, newest(), count);
  }

 private:
  std::size_t slot_of(std::int64_t index) const { return static_cast<std::size_t>(index % capacity()); }

  static const Spectrum& zero_frame() {
    static const Spectrum z{};
    return z;
  }

  DfConfig cfg_;
  std::vector<Spectrum> ring_;
  std::int64_t frames_seen_ = 0;
};

inline const Spectrum& FrameWindow::operator[](std::size_t i) const {
  return buf_->frame(first_ + static_cast<std::int64_t>(i));
}

// Y(t, f) = sum_i conj(W_i(f)) * X(t + l - i, f) for f < df_bins.
inline void apply_df(const MultiFrameBuffer& buf, const DfCoefSet& coefs, FrameHandle t,
                     std::span<cfloat> out) {
  const DfConfig& cfg = buf.config();
  if (coefs.df_bins() != cfg.df_bins || coefs.order_n() != cfg.order_n)
    throw std::invalid_argument("apply_df: coefficient shape does not match buffer config");
  if (static_cast<int>(out.size()) != cfg.df_bins)
    throw std::invalid_argument("apply_df: output size must equal df_bins");
  if (t.frame + cfg.lookahead_l != buf.newest())
    throw std::invalid_argument("apply_df: handle is not the current delayed frame");

  for (int f = 0; f < cfg.df_bins; ++f) {
    cdouble acc{};
    const auto w = coefs.taps(f);
    for (int i = 0; i < cfg.order_n; ++i)
      acc += std::conj(cdouble(w[i])) * cdouble(buf.tap(t, i).bins[f]);
    if (!std::isfinite(acc.real()) || !std::isfinite(acc.imag()))
      throw NumericError("apply_df: non-finite output at bin " + std::to_string(f), f);
    out[f] = cfloat(acc);
  }
}

inline std::vector<cfloat> apply_df(const MultiFrameBuffer& buf, const DfCoefSet& coefs, FrameHandle t) {
  std::vector<cfloat> out(buf.config().df_bins);
  apply_df(buf, coefs, t, out);
  return out;
}

// Low bins from the DF output, the rest from the first-stage output.
inline void stitch(std::span<const cfloat> df_low, const Spectrum& erb_out, Spectrum& out) {
  if (df_low.size() > kBins) throw std::invalid_argument("stitch: df_low larger than spectrum");
  std::copy(df_low.begin(), df_low.end(), out.bins.begin());
  std::copy(erb_out.bins.begin() + df_low.size(), erb_out.bins.end(), out.bins.begin() + df_low.size());
  out.frame_index = erb_out.frame_index;
}

inline Spectrum stitch(std::span<const cfloat> df_low, const Spectrum& erb_out) {
  Spectrum out;
  stitch(df_low, erb_out, out);
  return out;
}

// Reusable workspace for the least-squares solver.
struct LsScratch {
  explicit LsScratch(int order_n = 5) : n(order_n), r(order_n * order_n), p(order_n), l(order_n * order_n) {}
  int n;
  std::vector<cdouble> r, p, l;
};

namespace detail {

// Solves R w = p for Hermitian positive-definite R via Cholesky. R is n x n
// row-major. Returns false when R is not numerically positive definite.
inline bool cholesky_solve(std::span<const cdouble> r, std::span<cdouble> p, std::span<cdouble> l, int n) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      cdouble s = r[i * n + j];
      for (int k = 0; k < j; ++k) s -= l[i * n + k] * std::conj(l[j * n + k]);
      if (i == j) {
        if (!(s.real() > 0.0) || !std::isfinite(s.real())) return false;
        l[i * n + i] = std::sqrt(s.real());
      } else {
        l[i * n + j] = s / l[j * n + j].real();
      }
    }
  }
  // L y = p
  for (int i = 0; i < n; ++i) {
    cdouble s = p[i];
    for (int k = 0; k < i; ++k) s -= l[i * n + k] * p[k];
    p[i] = s / l[i * n + i].real();
  }
  // L^H w = y
  for (int i = n - 1; i >= 0; --i) {
    cdouble s = p[i];
    for (int k = i + 1; k < n; ++k) s -= std::conj(l[k * n + i]) * p[k];
    p[i] = s / l[i * n + i].real();
  }
  return true;
}

}  // namespace detail

inline constexpr double kLsDiagonalLoading = 1e-6;

// Least-squares DF taps per bin: minimizes sum_t |S(t) - w^H xbar(t)|^2 over
// every t whose multi-frame vector lies inside the window, using
// R w = p with R = sum xbar xbar^H + loading, p = sum xbar conj(S).
// Bins whose normal matrix stays singular get identity taps; the return value
// counts them, and `fallback` (if given) receives the flag per bin.
template <SpectrumWindow Noisy, SpectrumWindow Clean>
int ls_oracle_coefs_into(const Noisy& noisy, const Clean& clean, const DfConfig& cfg, DfCoefSet& out,
                         LsScratch& scratch, std::span<std::uint8_t> fallback = {}) {
  const int n = cfg.order_n;
  const int l = cfg.lookahead_l;
  const std::size_t frames = noisy.size();
  if (clean.size() != frames) throw std::invalid_argument("ls_oracle_coefs: window lengths differ");
  if (frames < static_cast<std::size_t>(4 * n))
    throw std::invalid_argument("ls_oracle_coefs: window must hold at least 4 * order_n frames");
  if (out.df_bins() != cfg.df_bins || out.order_n() != n) out = DfCoefSet::zeros(cfg);
  if (scratch.n != n) scratch = LsScratch(n);

  // Window index j holds frame first+j; target tau needs frames tau+l-n+1 .. tau+l.
  const int tau_begin = n - 1 - l;
  const int tau_end = static_cast<int>(frames) - l;  // exclusive
  int flagged = 0;
  for (int f = 0; f < cfg.df_bins; ++f) {
    std::fill(scratch.r.begin(), scratch.r.end(), cdouble{});
    std::fill(scratch.p.begin(), scratch.p.end(), cdouble{});
    for (int tau = tau_begin; tau < tau_end; ++tau) {
      const cdouble s = cdouble(clean[tau].bins[f]);
      for (int i = 0; i < n; ++i) {
        const cdouble xi = cdouble(noisy[tau + l - i].bins[f]);
        scratch.p[i] += xi * std::conj(s);
        for (int k = 0; k < n; ++k) scratch.r[i * n + k] += xi * std::conj(cdouble(noisy[tau + l - k].bins[f]));
      }
    }
    double trace = 0.0;
    for (int i = 0; i < n; ++i) trace += scratch.r[i * n + i].real();
    const double loading = kLsDiagonalLoading * trace / n;
    for (int i = 0; i < n; ++i) scratch.r[i * n + i] += loading;

    const bool ok = trace > 0.0 && detail::cholesky_solve(scratch.r, scratch.p, scratch.l, n);
    auto taps = out.taps(f);
    if (ok) {
      for (int i = 0; i < n; ++i) taps[i] = cfloat(scratch.p[i]);
    } else {
      out.set_identity_bin(f, l);
      ++flagged;
    }
    if (!fallback.empty()) fallback[f] = ok ? 0 : 1;
  }
  out.clamp_magnitudes(cfg.tap_cap);
  return flagged;
}

struct LsFit {
  DfCoefSet coefs;
  std::vector<std::uint8_t> fallback;  // 1 where identity taps were substituted
};

template <SpectrumWindow Noisy, SpectrumWindow Clean>
LsFit ls_oracle_coefs(const Noisy& noisy, const Clean& clean, const DfConfig& cfg) {
  cfg.validate();
  LsFit fit{DfCoefSet::zeros(cfg), std::vector<std::uint8_t>(cfg.df_bins, 0)};
  LsScratch scratch(cfg.order_n);
  ls_oracle_coefs_into(noisy, clean, cfg, fit.coefs, scratch, fit.fallback);
  return fit;
}

// Coefficient file: 16-byte header {"DFC1", u32 order_n, u32 df_bins, u32 0},
// then little-endian f32 re/im pairs, bin-major then tap.
namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("coef file: truncated");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void write_coefs(std::ostream& os, const DfCoefSet& c) {
  os.write("DFC1", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(c.order_n()));
  detail::put_u32(os, static_cast<std::uint32_t>(c.df_bins()));
  detail::put_u32(os, 0);
  for (cfloat v : c.data()) {
    detail::put_u32(os, std::bit_cast<std::uint32_t>(v.real()));
    detail::put_u32(os, std::bit_cast<std::uint32_t>(v.imag()));
  }
  if (!os) throw std::runtime_error("coef file: write failed");
}

inline DfCoefSet read_coefs(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "DFC1", 4) != 0)
    throw std::runtime_error("coef file: bad magic");
  const std::uint32_t order = detail::get_u32(is);
  const std::uint32_t bins = detail::get_u32(is);
  detail::get_u32(is);
  if (order < 1 || order > 64 || bins > static_cast<std::uint32_t>(kBins))
    throw std::runtime_error("coef file: implausible shape");
  DfCoefSet c(static_cast<int>(bins), static_cast<int>(order));
  for (cfloat& v : c.data()) {
    const float re = std::bit_cast<float>(detail::get_u32(is));
    const float im = std::bit_cast<float>(detail::get_u32(is));
    v = cfloat(re, im);
  }
  return c;
}

}  // namespace dfn
