#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include "dfn/deep_filter.hpp"
#include "dfn/erb.hpp"
#include "dfn/spectrum.hpp"

namespace dfn {

inline constexpr float kSnrMinDb = -15.0f;
inline constexpr float kSnrMaxDb = 35.0f;

// Frame-level local SNR, always inside [-15, 35] dB.
class SnrEstimate {
 public:
  SnrEstimate() = default;
  explicit SnrEstimate(double db) : xi_db_(clamp_db(db)) {}
  float db() const { return xi_db_; }

  static float clamp_db(double db) {
    if (std::isnan(db)) return kSnrMinDb;
    return static_cast<float>(std::clamp(db, static_cast<double>(kSnrMinDb), static_cast<double>(kSnrMaxDb)));
  }

 private:
  float xi_db_ = kSnrMinDb;
};

// xi = 10 log10(sum |S|^2 / sum |Z|^2); zero noise maps to the upper clamp,
// zero everything to the lower one.
inline SnrEstimate local_snr(const Spectrum& clean, const Spectrum& noise) {
  double es = 0.0, ez = 0.0;
  for (int k = 0; k < kBins; ++k) {
    es += std::norm(cdouble(clean.bins[k]));
    ez += std::norm(cdouble(noise.bins[k]));
  }
  if (es <= 0.0) return SnrEstimate(kSnrMinDb);
  if (ez <= 0.0) return SnrEstimate(kSnrMaxDb);
  return SnrEstimate(10.0 * std::log10(es / ez));
}

struct EstimatorOutput {
  ErbGains gains;
  DfCoefSet coefs;
  SnrEstimate snr;

  EstimatorOutput() = default;
  EstimatorOutput(const ErbLayout& layout, const DfConfig& df)
      : gains(layout.band_count(), 1.0f), coefs(DfCoefSet::identity(df)), snr(kSnrMaxDb) {}

  void set_passthrough(int lookahead) {
    gains.fill(1.0f);
    coefs.set_identity(lookahead);
    snr = SnrEstimate(kSnrMaxDb);
  }
};

namespace detail {

inline double band_power(const Spectrum& s, const ErbLayout& layout, int b) {
  double p = 0.0;
  for (int k = layout.edges[b]; k < layout.edges[b + 1]; ++k) p += std::norm(cdouble(s.bins[k]));
  return p / layout.width(b);
}

}  // namespace detail

// Reusable state for the ideal-target estimator.
struct OracleScratch {
  explicit OracleScratch(const DfConfig& df = {}) : ls(df.order_n) {}
  LsScratch ls;
  Spectrum noise;
};

// Ideal targets from a clean reference. The estimated frame is the one the
// look-ahead delays to: index size - 1 - l of the windows.
template <SpectrumWindow Noisy, SpectrumWindow Clean>
void oracle_estimate_into(const Noisy& noisy, const Clean& clean, const ErbLayout& layout,
                          const DfConfig& df, EstimatorOutput& out, OracleScratch& scratch) {
  if (noisy.size() != clean.size() || noisy.size() < static_cast<std::size_t>(df.lookahead_l + 1))
    throw std::invalid_argument("oracle_estimate: windows must be aligned and cover the look-ahead");
  const std::size_t target = noisy.size() - 1 - df.lookahead_l;
  const Spectrum& x = noisy[target];
  const Spectrum& s = clean[target];

  if (out.gains.size() != layout.band_count()) out.gains = ErbGains(layout.band_count());
  for (int b = 0; b < layout.band_count(); ++b) {
    const double px = detail::band_power(x, layout, b);
    const double ps = detail::band_power(s, layout, b);
    out.gains.set(b, px > 0.0 ? static_cast<float>(std::sqrt(ps / px)) : 0.0f);
  }

  ls_oracle_coefs_into(noisy, clean, df, out.coefs, scratch.ls);

  for (int k = 0; k < kBins; ++k) scratch.noise.bins[k] = x.bins[k] - s.bins[k];
  out.snr = local_snr(s, scratch.noise);
}

template <SpectrumWindow Noisy, SpectrumWindow Clean>
EstimatorOutput oracle_estimate(const Noisy& noisy, const Clean& clean, const ErbLayout& layout,
                                const DfConfig& df) {
  df.validate();
  EstimatorOutput out(layout, df);
  OracleScratch scratch(df);
  oracle_estimate_into(noisy, clean, layout, df, out, scratch);
  return out;
}

struct NoiseFloorParams {
  int init_frames = 10;
  // Recursive smoothing of band power (about 45 ms at 100 frames/s).
  float smoothing = 0.8f;
  // The floor rises at most this fast and drops instantly.
  float rise_db_per_s = 4.0f;
  // The floor never sits more than this far below the smoothed power.
  float max_depth_db = 30.0f;
  // Minimum-tracking bias compensation applied before the SNR ratio.
  float bias = 2.0f;
  double epsilon = 1e-10;
};

// Per-band smoothed power and decaying-minimum floor.
class NoiseFloorState {
 public:
  NoiseFloorState() = default;
  explicit NoiseFloorState(int n_bands, NoiseFloorParams params = {})
      : params_(params), smoothed_(n_bands, 0.0), floor_(n_bands, 0.0) {
    rise_ = std::pow(10.0, params_.rise_db_per_s / 10.0 * kHopLen / kSampleRate);
    depth_ = std::pow(10.0, -params_.max_depth_db / 10.0);
  }

  int band_count() const { return static_cast<int>(smoothed_.size()); }
  std::int64_t frames() const { return frames_; }
  const NoiseFloorParams& params() const { return params_; }
  std::span<const double> smoothed() const { return smoothed_; }
  std::span<const double> floor() const { return floor_; }

  void reset() {
    std::fill(smoothed_.begin(), smoothed_.end(), 0.0);
    std::fill(floor_.begin(), floor_.end(), 0.0);
    frames_ = 0;
  }

  // Folds one frame of band powers into the state.
  void update(std::span<const double> power) {
    const int n = band_count();
    if (frames_ < params_.init_frames) {
      // Running mean seeds both trackers.
      const double w = 1.0 / static_cast<double>(frames_ + 1);
      for (int b = 0; b < n; ++b) {
        smoothed_[b] += (power[b] - smoothed_[b]) * w;
        floor_[b] = smoothed_[b];
      }
    } else {
      const double a = params_.smoothing;
      for (int b = 0; b < n; ++b) {
        smoothed_[b] = a * smoothed_[b] + (1.0 - a) * power[b];
        const double risen = std::max(floor_[b] * rise_, smoothed_[b] * depth_);
        floor_[b] = std::min(smoothed_[b], risen);
      }
    }
    ++frames_;
  }

 private:
  NoiseFloorParams params_;
  std::vector<double> smoothed_;
  std::vector<double> floor_;
  double rise_ = 1.0;
  double depth_ = 0.0;
  std::int64_t frames_ = 0;
};

// Self-contained estimate from the noisy frame alone (causal): Wiener-like
// gains from the a-posteriori band SNR against the tracked floor, identity DF taps.
inline void blind_estimate_into(NoiseFloorState& state, const Spectrum& noisy, const ErbLayout& layout,
                                const DfConfig& df, EstimatorOutput& out, std::span<double> power_scratch) {
  const int n = layout.band_count();
  if (state.band_count() != n) throw std::invalid_argument("blind_estimate: state band count mismatch");
  if (static_cast<int>(power_scratch.size()) < n)
    throw std::invalid_argument("blind_estimate: scratch too small");
  for (int b = 0; b < n; ++b) power_scratch[b] = detail::band_power(noisy, layout, b);
  state.update(power_scratch.first(n));

  if (out.gains.size() != n) out.gains = ErbGains(n);
  const auto& p = state.params();
  double excess = 0.0;
  for (int b = 0; b < n; ++b) {
    const double noise = std::max(state.floor()[b] * p.bias, p.epsilon);
    const double gamma = state.smoothed()[b] / noise;
    out.gains.set(b, static_cast<float>(1.0 - 1.0 / std::max(gamma, 1e-12)));
    excess += std::max(gamma - 1.0, 0.0);
  }
  out.snr = SnrEstimate(10.0 * std::log10(std::max(excess / n, p.epsilon)));
  if (out.coefs.df_bins() != df.df_bins || out.coefs.order_n() != df.order_n) out.coefs = DfCoefSet::zeros(df);
  out.coefs.set_identity(df.lookahead_l);
}

inline EstimatorOutput blind_estimate(NoiseFloorState& state, const Spectrum& noisy, const ErbLayout& layout,
                                      const DfConfig& df) {
  EstimatorOutput out(layout, df);
  std::vector<double> scratch(layout.band_count());
  blind_estimate_into(state, noisy, layout, df, out, scratch);
  return out;
}

enum class EstimatorKind { passthrough, blind, oracle };

inline std::string_view to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::passthrough: return "passthrough";
    case EstimatorKind::blind: return "blind";
    case EstimatorKind::oracle: return "oracle";
  }
  return "unknown";
}

inline bool parse_estimator_kind(std::string_view s, EstimatorKind& out) {
  for (auto k : {EstimatorKind::passthrough, EstimatorKind::blind, EstimatorKind::oracle}) {
    if (s == to_string(k)) {
      out = k;
      return true;
    }
  }
  return false;
}

// What an estimator sees for output frame t: buffers hold frames up to t + l.
struct EstimatorInput {
  const MultiFrameBuffer& noisy;
  const MultiFrameBuffer* clean;  // null without a reference signal
  FrameHandle t;
};

// Pluggable per-frame estimator. A learned backend would implement this too.
class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual EstimatorKind kind() const = 0;
  virtual void reset() {}
  virtual void estimate(const EstimatorInput& in, EstimatorOutput& out) = 0;
};

class PassthroughEstimator final : public Estimator {
 public:
  explicit PassthroughEstimator(const DfConfig& df) : df_(df) {}
  EstimatorKind kind() const override { return EstimatorKind::passthrough; }
  void estimate(const EstimatorInput&, EstimatorOutput& out) override { out.set_passthrough(df_.lookahead_l); }

 private:
  DfConfig df_;
};

class BlindEstimator final : public Estimator {
 public:
  BlindEstimator(const ErbLayout& layout, const DfConfig& df, NoiseFloorParams params = {})
      : layout_(layout), df_(df), state_(layout.band_count(), params), power_(layout.band_count()) {}
  EstimatorKind kind() const override { return EstimatorKind::blind; }
  void reset() override { state_.reset(); }
  void estimate(const EstimatorInput& in, EstimatorOutput& out) override {
    blind_estimate_into(state_, in.noisy.frame(in.t.frame), layout_, df_, out, power_);
  }
  const NoiseFloorState& state() const { return state_; }

 private:
  ErbLayout layout_;
  DfConfig df_;
  NoiseFloorState state_;
  std::vector<double> power_;
};

class OracleEstimator final : public Estimator {
 public:
  // Least-squares window length in frames.
  static constexpr int kDefaultWindow = 32;

  OracleEstimator(const ErbLayout& layout, const DfConfig& df, int window = kDefaultWindow)
      : layout_(layout), df_(df), window_(std::max(window, 4 * df.order_n)), scratch_(df) {}
  EstimatorKind kind() const override { return EstimatorKind::oracle; }
  int window() const { return window_; }
  void estimate(const EstimatorInput& in, EstimatorOutput& out) override {
    if (!in.clean) throw std::invalid_argument("oracle estimator requires a clean reference");
    oracle_estimate_into(in.noisy.window(window_), in.clean->window(window_), layout_, df_, out, scratch_);
  }

 private:
  ErbLayout layout_;
  DfConfig df_;
  int window_;
  OracleScratch scratch_;
};

}  // namespace dfn
