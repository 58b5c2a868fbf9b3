#pragma once

#include <cmath>
#include <stdexcept>
#include <string_view>

#include "dfn/estimators.hpp"
#include "dfn/spectrum.hpp"

namespace dfn {

struct GateThresholds {
  float silence_below_db = -10.0f;
  float df_off_above_db = 20.0f;

  bool valid() const {
    auto in_range = [](float v) { return std::isfinite(v) && v >= kSnrMinDb && v <= kSnrMaxDb; };
    return in_range(silence_below_db) && in_range(df_off_above_db) && silence_below_db < df_off_above_db;
  }
  void validate() const {
    if (!valid())
      throw std::invalid_argument(
          "thresholds must lie in [-15, 35] dB with silence_below_db < df_off_above_db");
  }

  friend bool operator==(const GateThresholds&, const GateThresholds&) = default;
};

enum class StageDecision { silence, erb_only, full };

inline std::string_view to_string(StageDecision d) {
  switch (d) {
    case StageDecision::silence: return "silence";
    case StageDecision::erb_only: return "erb_only";
    case StageDecision::full: return "full";
  }
  return "unknown";
}

struct AttenLimit {
  float max_atten_db = 100.0f;

  bool valid() const { return std::isfinite(max_atten_db) && max_atten_db >= 0.0f; }
  void validate() const {
    if (!valid()) throw std::invalid_argument("attenuation limit must be finite and >= 0 dB");
  }
  double floor_gain() const { return std::pow(10.0, -static_cast<double>(max_atten_db) / 20.0); }

  friend bool operator==(const AttenLimit&, const AttenLimit&) = default;
};

// Strict inequalities: the threshold values themselves fall into `full`.
constexpr StageDecision decide(float xi_db, const GateThresholds& th) {
  if (xi_db < th.silence_below_db) return StageDecision::silence;
  if (xi_db > th.df_off_above_db) return StageDecision::erb_only;
  return StageDecision::full;
}

inline StageDecision decide(const SnrEstimate& snr, const GateThresholds& th) { return decide(snr.db(), th); }

inline void apply_decision(StageDecision d, const Spectrum& erb_out, const Spectrum& stitched, Spectrum& out) {
  switch (d) {
    case StageDecision::silence:
      out.clear();
      out.frame_index = erb_out.frame_index;
      break;
    case StageDecision::erb_only: out = erb_out; break;
    case StageDecision::full: out = stitched; break;
  }
}

inline Spectrum apply_decision(StageDecision d, const Spectrum& /*noisy*/, const Spectrum& erb_out,
                               const Spectrum& stitched) {
  Spectrum out;
  apply_decision(d, erb_out, stitched, out);
  return out;
}

// Bounds every bin's effective gain from below by 10^(-max_atten_db / 20).
// Bins under the floor become floor * noisy, i.e. they keep the noisy phase.
// A 0 dB limit permits no modification at all, so the output is the noisy frame.
inline void limit_attenuation(const Spectrum& noisy, const Spectrum& processed, const AttenLimit& lim,
                              Spectrum& out) {
  const double floor = lim.floor_gain();
  if (floor >= 1.0) {
    out.bins = noisy.bins;
    out.frame_index = processed.frame_index;
    return;
  }
  for (int k = 0; k < kBins; ++k) {
    const cdouble x(noisy.bins[k]);
    const cdouble y(processed.bins[k]);
    out.bins[k] = std::abs(y) >= floor * std::abs(x) ? processed.bins[k] : cfloat(x * floor);
  }
  out.frame_index = processed.frame_index;
}

inline Spectrum limit_attenuation(const Spectrum& noisy, const Spectrum& processed, const AttenLimit& lim) {
  Spectrum out;
  limit_attenuation(noisy, processed, lim, out);
  return out;
}

}  // namespace dfn
