#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dfn/spectrum.hpp"

namespace dfn {

inline constexpr int kErbBands = 32;
inline constexpr int kErbMinWidth = 2;
inline constexpr double kFeatureFloor = 1e-10;

// ERB-rate scale (Glasberg & Moore form) and its closed-form inverse.
inline double hz_to_erb_rate(double hz) { return 21.4 * std::log10(1.0 + 0.00437 * hz); }
inline double erb_rate_to_hz(double erb) { return (std::pow(10.0, erb / 21.4) - 1.0) / 0.00437; }

// Rectangular partition of the linear bins into bands.
// Band b covers bins [edges[b], edges[b + 1]).
struct ErbLayout {
  std::vector<int> edges;
  int min_band_width = kErbMinWidth;

  int band_count() const { return static_cast<int>(edges.size()) - 1; }
  int first_bin(int band) const { return edges[band]; }
  int width(int band) const { return edges[band + 1] - edges[band]; }

  int band_of(int bin) const {
    auto it = std::upper_bound(edges.begin(), edges.end(), bin);
    return static_cast<int>(it - edges.begin()) - 1;
  }

  double center_hz(int band) const {
    return 0.5 * (edges[band] + edges[band + 1] - 1) * kBinHz;
  }
};

// Band edges are spaced uniformly on the ERB-rate axis and snapped to bins.
// Low bands narrower than min_width are widened greedily; each width is kept
// >= the previous one and <= an equal share of what remains, which makes the
// partition always feasible when n_bands * min_width <= bins.
inline ErbLayout design_layout(const StftConfig& cfg, int n_bands = kErbBands,
                               int min_width = kErbMinWidth) {
  cfg.validate();
  const int bins = cfg.bin_count();
  if (n_bands < 1 || min_width < 1)
    throw std::invalid_argument("design_layout: n_bands and min_width must be >= 1");
  if (static_cast<long>(n_bands) * min_width > bins)
    throw std::invalid_argument("design_layout: n_bands * min_width exceeds bin count");

  // Bin k spans [k, k+1) on the continuous axis, so the top edge sits at bins * bin_hz.
  const double top_erb = hz_to_erb_rate(bins * kBinHz);
  ErbLayout layout;
  layout.min_band_width = min_width;
  layout.edges.assign(n_bands + 1, 0);
  int prev_width = min_width;
  for (int b = 1; b < n_bands; ++b) {
    const int prev = layout.edges[b - 1];
    const double ideal = erb_rate_to_hz(top_erb * b / n_bands) / kBinHz;
    const int remaining = bins - prev;
    const int lo = std::max(min_width, prev_width);
    const int hi = remaining / (n_bands - b + 1);
    const int width = std::clamp(static_cast<int>(std::lround(ideal)) - prev, lo, hi);
    layout.edges[b] = prev + width;
    prev_width = width;
  }
  layout.edges[n_bands] = bins;
  return layout;
}

// Per band: mean bin power in dB with a 1e-10 floor.
inline void compress(const Spectrum& spec, const ErbLayout& layout, std::span<double> features) {
  const int n = layout.band_count();
  if (static_cast<int>(features.size()) != n)
    throw std::invalid_argument("compress: feature span size must equal band count");
  for (int b = 0; b < n; ++b) {
    double p = 0.0;
    for (int k = layout.edges[b]; k < layout.edges[b + 1]; ++k) p += std::norm(cdouble(spec.bins[k]));
    p /= layout.width(b);
    features[b] = 10.0 * std::log10(p + kFeatureFloor);
  }
}

inline std::vector<double> compress(const Spectrum& spec, const ErbLayout& layout) {
  std::vector<double> f(layout.band_count());
  compress(spec, layout, f);
  return f;
}

// Real gains in [0, 1], one per band. Values are clamped on assignment.
class ErbGains {
 public:
  ErbGains() = default;
  explicit ErbGains(int n_bands, float value = 1.0f) : g_(n_bands, clamp_gain(value)) {}
  explicit ErbGains(std::span<const float> values) : g_(values.size()) {
    for (std::size_t i = 0; i < values.size(); ++i) g_[i] = clamp_gain(values[i]);
  }

  int size() const { return static_cast<int>(g_.size()); }
  float operator[](int b) const { return g_[b]; }
  void set(int b, float v) { g_[b] = clamp_gain(v); }
  void fill(float v) { std::fill(g_.begin(), g_.end(), clamp_gain(v)); }
  std::span<const float> values() const { return g_; }

  float mean() const {
    if (g_.empty()) return 0.0f;
    double s = 0.0;
    for (float v : g_) s += v;
    return static_cast<float>(s / g_.size());
  }

  static float clamp_gain(float v) {
    if (!std::isfinite(v)) return 0.0f;
    return std::clamp(v, 0.0f, 1.0f);
  }

 private:
  std::vector<float> g_;
};

// Piecewise-constant expansion of band gains onto the bins.
inline void apply_gains(const Spectrum& spec, const ErbGains& gains, const ErbLayout& layout,
                        Spectrum& out) {
  if (gains.size() != layout.band_count())
    throw std::invalid_argument("apply_gains: gain count must equal band count");
  for (int b = 0; b < layout.band_count(); ++b) {
    const float g = gains[b];
    for (int k = layout.edges[b]; k < layout.edges[b + 1]; ++k) out.bins[k] = spec.bins[k] * g;
  }
  out.frame_index = spec.frame_index;
}

inline Spectrum apply_gains(const Spectrum& spec, const ErbGains& gains, const ErbLayout& layout) {
  Spectrum out;
  apply_gains(spec, gains, layout, out);
  return out;
}

// Plain-text table: band, first bin, last bin, center frequency.
inline std::string format_layout(const ErbLayout& layout) {
  std::string s = "band first_bin last_bin center_hz\n";
  char line[96];
  for (int b = 0; b < layout.band_count(); ++b) {
    std::snprintf(line, sizeof line, "%d %d %d %.1f\n", b, layout.edges[b],
                  layout.edges[b + 1] - 1, layout.center_hz(b));
    s += line;
  }
  return s;
}

}  // namespace dfn
