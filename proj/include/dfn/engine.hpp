#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "dfn/deep_filter.hpp"
#include "dfn/erb.hpp"
#include "dfn/estimators.hpp"
#include "dfn/realtime.hpp"
#include "dfn/spectrum.hpp"
#include "dfn/stage_control.hpp"
#include "dfn/stft.hpp"

namespace dfn {

struct EngineConfig {
  StftConfig stft;
  DfConfig df;
  GateThresholds thresholds;
  AttenLimit atten;
  EstimatorKind estimator = EstimatorKind::blind;
  bool erb_enabled = true;
  bool df_enabled = true;

  void validate() const {
    stft.validate();
    df.validate();
    if (df.lookahead_l != stft.lookahead_frames)
      throw std::invalid_argument("config: DF look-ahead must equal the STFT look-ahead");
    thresholds.validate();
    atten.validate();
  }

  friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

inline constexpr float kRmsFloorDb = -120.0f;

// Per-frame telemetry.
struct MeterFrame {
  std::int64_t frame_index = 0;
  float xi_db = 0.0f;
  StageDecision decision = StageDecision::full;
  float mean_gain = 1.0f;
  float df_delta_db = 0.0f;  // DF low-band energy relative to the ERB stage's low band
  float in_rms_db = kRmsFloorDb;
  float out_rms_db = kRmsFloorDb;
};

struct StageTimes {
  double analysis_s = 0.0;
  double estimate_s = 0.0;
  double erb_s = 0.0;
  double df_s = 0.0;
  double gate_s = 0.0;
  double synthesis_s = 0.0;

  double sum() const { return analysis_s + estimate_s + erb_s + df_s + gate_s + synthesis_s; }
};

struct RtfReport {
  double processed_audio_s = 0.0;
  double wall_time_s = 0.0;
  double rtf = 0.0;
  StageTimes stages;
};

inline float rms_dbfs(std::span<const float> x) {
  double e = 0.0;
  for (float v : x) e += static_cast<double>(v) * v;
  const double rms = x.empty() ? 0.0 : std::sqrt(e / x.size());
  return static_cast<float>(std::max(20.0 * std::log10(std::max(rms, 1e-12)), static_cast<double>(kRmsFloorDb)));
}

// Streaming two-stage enhancer. One input hop in, one output hop out; the
// output is the input delayed by latency_samples(config().stft) after the
// first latency/hop calls, which emit nothing.
//
// Threading: process_hop runs on the audio actor. update_config,
// snapshot_config and meters() consumption run on the control actor.
class Engine {
 public:
  using MeterRing = DropOldestRing<MeterFrame, 256>;

  explicit Engine(const EngineConfig& cfg = {}, bool has_clean_reference = false)
      : structure_((check(cfg, has_clean_reference), cfg)),
        has_clean_(has_clean_reference),
        layout_(design_layout(cfg.stft)),
        analyzer_(cfg.stft),
        clean_analyzer_(cfg.stft),
        synthesizer_(cfg.stft),
        noisy_buf_(cfg.df, OracleEstimator::kDefaultWindow),
        clean_buf_(cfg.df, OracleEstimator::kDefaultWindow),
        passthrough_(cfg.df),
        blind_(layout_, cfg.df),
        oracle_(layout_, cfg.df),
        est_(layout_, cfg.df),
        df_low_(cfg.df.df_bins),
        in_hop_(cfg.stft.hop_len),
        clean_hop_(cfg.stft.hop_len),
        synth_hop_(cfg.stft.hop_len),
        pending_hop_(cfg.stft.hop_len),
        in_rms_(cfg.stft.lookahead_frames + 2, kRmsFloorDb),
        live_(cfg),
        control_cfg_(cfg) {}

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  int hop_len() const { return structure_.stft.hop_len; }
  int latency() const { return latency_samples(structure_.stft); }
  // Calls that emit nothing at stream start, and zero hops needed to drain.
  int warmup_hops() const { return latency() / hop_len(); }
  bool has_clean_reference() const { return has_clean_; }
  const ErbLayout& layout() const { return layout_; }
  std::int64_t hops_in() const { return hops_in_; }
  std::int64_t frames_processed() const { return frames_processed_; }

  // Throws std::invalid_argument if `cfg` is invalid for this engine.
  void check(const EngineConfig& cfg) const { check(cfg, has_clean_, &structure_); }

  // Control side. Rejected configs leave the previous one in place.
  void update_config(const EngineConfig& cfg) {
    check(cfg);
    std::lock_guard lock(control_mutex_);
    control_cfg_ = cfg;
    live_.publish(cfg);
  }

  // The config the next frame will use.
  EngineConfig snapshot_config() const {
    std::lock_guard lock(control_mutex_);
    return control_cfg_;
  }

  MeterRing& meters() { return meters_; }
  // Whether the most recent process_hop wrote its output span (also valid
  // when it threw NumericError).
  bool last_hop_emitted() const { return last_emitted_; }
  const MeterFrame& last_meter() const { return last_meter_; }

  // Processes one hop. Returns true when `out` was written. Non-finite input
  // samples are zeroed, the hop is processed, and NumericError is thrown
  // afterwards; the stream stays consistent.
  bool process_hop(std::span<const float> in, std::span<float> out, std::span<const float> clean = {}) {
    using clock = std::chrono::steady_clock;
    const int hop = hop_len();
    if (static_cast<int>(in.size()) != hop || static_cast<int>(out.size()) != hop)
      throw std::invalid_argument("process_hop: input and output must hold exactly hop_len samples");
    if (!clean.empty() && static_cast<int>(clean.size()) != hop)
      throw std::invalid_argument("process_hop: clean hop must hold exactly hop_len samples");
    if (!clean.empty() && !has_clean_)
      throw std::invalid_argument("process_hop: engine was built without a clean reference");

    // One snapshot per frame.
    active_ = live_.read();
    if (active_.estimator == EstimatorKind::oracle && clean.empty())
      throw std::invalid_argument("process_hop: oracle estimator requires a clean hop");

    bool bad = false;
    for (int i = 0; i < hop; ++i) {
      const bool ok = std::isfinite(in[i]);
      bad |= !ok;
      in_hop_[i] = ok ? in[i] : 0.0f;
    }
    if (bad) std::fill(in_hop_.begin(), in_hop_.end(), 0.0f);
    bool bad_clean = false;
    if (has_clean_) {
      for (int i = 0; i < hop; ++i) {
        const float v = clean.empty() ? 0.0f : clean[i];
        bad_clean |= !std::isfinite(v);
        clean_hop_[i] = std::isfinite(v) ? v : 0.0f;
      }
      if (bad_clean) std::fill(clean_hop_.begin(), clean_hop_.end(), 0.0f);
    }

    auto t0 = clock::now();
    analyzer_.analyze(in_hop_, x_);
    const auto handle = noisy_buf_.push(x_);
    if (has_clean_) {
      clean_analyzer_.analyze(clean_hop_, s_);
      clean_buf_.push(s_);
    }
    in_rms_[hops_in_ % in_rms_.size()] = rms_dbfs(in_hop_);
    ++hops_in_;
    auto t1 = clock::now();
    times_.analysis_s += seconds(t1 - t0);

    bool emitted = false;
    last_emitted_ = false;
    if (pending_) {
      std::copy(pending_hop_.begin(), pending_hop_.end(), out.begin());
      pending_ = false;
      emitted = last_emitted_ = true;
    }
    if (handle) {
      process_frame(*handle);
      // Frame 0 spans only pre-stream padding and is never emitted.
      if (handle->frame >= 1) {
        std::swap(pending_hop_, synth_hop_);
        pending_ = true;
      }
    }
    wall_s_ += seconds(clock::now() - t0);
    audio_s_ += static_cast<double>(hop) / structure_.stft.sample_rate_hz;

    if (bad || bad_clean) throw NumericError("process_hop: non-finite input samples; hop zeroed");
    return emitted;
  }

  // Timing accumulated since construction or the last reset_timing().
  RtfReport timing() const {
    RtfReport r;
    r.processed_audio_s = audio_s_;
    r.wall_time_s = wall_s_;
    r.rtf = audio_s_ > 0.0 ? wall_s_ / audio_s_ : 0.0;
    r.stages = times_;
    return r;
  }
  void reset_timing() {
    audio_s_ = wall_s_ = 0.0;
    times_ = {};
  }

  // Back to the just-constructed stream state; config is kept.
  void reset() {
    analyzer_.reset();
    clean_analyzer_.reset();
    synthesizer_.reset();
    noisy_buf_.reset();
    clean_buf_.reset();
    blind_.reset();
    oracle_.reset();
    std::fill(in_rms_.begin(), in_rms_.end(), kRmsFloorDb);
    pending_ = last_emitted_ = false;
    hops_in_ = frames_processed_ = 0;
    last_meter_ = {};
    reset_timing();
  }

 private:
  static void check(const EngineConfig& cfg, bool has_clean, const EngineConfig* structure = nullptr) {
    cfg.validate();
    if (structure && (cfg.stft != structure->stft || cfg.df != structure->df))
      throw std::invalid_argument("config: STFT and DF geometry are fixed for a running engine");
    if (cfg.estimator == EstimatorKind::oracle && !has_clean)
      throw std::invalid_argument("config: oracle estimator requires a clean reference");
  }

  static double seconds(std::chrono::steady_clock::duration d) { return std::chrono::duration<double>(d).count(); }

  Estimator& estimator_for(EstimatorKind k) {
    switch (k) {
      case EstimatorKind::passthrough: return passthrough_;
      case EstimatorKind::blind: return blind_;
      case EstimatorKind::oracle: return oracle_;
    }
    return passthrough_;
  }

  void process_frame(FrameHandle t) {
    using clock = std::chrono::steady_clock;
    const EngineConfig& cfg = active_;
    const Spectrum& x = noisy_buf_.frame(t.frame);

    auto t0 = clock::now();
    if (cfg.estimator == EstimatorKind::passthrough) {
      passthrough_frame(t, x, cfg);
      times_.synthesis_s += seconds(clock::now() - t0);
      return;
    }
    estimator_for(cfg.estimator).estimate(EstimatorInput{noisy_buf_, has_clean_ ? &clean_buf_ : nullptr, t}, est_);
    // Frames whose multi-frame vector reaches before the stream start.
    if (t.frame < cfg.df.order_n - 1 - cfg.df.lookahead_l) est_.set_passthrough(cfg.df.lookahead_l);
    if (!cfg.erb_enabled) est_.gains.fill(1.0f);
    est_.coefs.clamp_magnitudes(cfg.df.tap_cap);
    StageDecision decision = decide(est_.snr, cfg.thresholds);
    if (decision == StageDecision::full && !cfg.df_enabled) decision = StageDecision::erb_only;
    auto t1 = clock::now();

    apply_gains(x, est_.gains, layout_, erb_out_);
    auto t2 = clock::now();

    float df_delta_db = 0.0f;
    if (decision == StageDecision::full) {
      apply_df(noisy_buf_, est_.coefs, t, df_low_);
      stitch(df_low_, erb_out_, stitched_);
      double e_df = 0.0, e_erb = 0.0;
      for (int f = 0; f < cfg.df.df_bins; ++f) {
        e_df += std::norm(cdouble(df_low_[f]));
        e_erb += std::norm(cdouble(erb_out_.bins[f]));
      }
      df_delta_db = static_cast<float>(10.0 * std::log10((e_df + 1e-10) / (e_erb + 1e-10)));
    }
    auto t3 = clock::now();

    apply_decision(decision, erb_out_, stitched_, gated_);
    limit_attenuation(x, gated_, cfg.atten, limited_);
    auto t4 = clock::now();

    synthesizer_.synthesize(limited_, synth_hop_);
    auto t5 = clock::now();

    times_.estimate_s += seconds(t1 - t0);
    times_.erb_s += seconds(t2 - t1);
    times_.df_s += seconds(t3 - t2);
    times_.gate_s += seconds(t4 - t3);
    times_.synthesis_s += seconds(t5 - t4);
    ++frames_processed_;

    publish_meter(t, est_.snr.db(), decision, est_.gains.mean(), df_delta_db);
  }

  // Unit gains and identity taps reproduce x on every path, and the limiter
  // never touches an unattenuated bin, so the frame goes straight to synthesis.
  void passthrough_frame(FrameHandle t, const Spectrum& x, const EngineConfig& cfg) {
    StageDecision decision = decide(kSnrMaxDb, cfg.thresholds);
    if (decision == StageDecision::full && !cfg.df_enabled) decision = StageDecision::erb_only;
    synthesizer_.synthesize(x, synth_hop_);
    ++frames_processed_;
    publish_meter(t, kSnrMaxDb, decision, 1.0f, 0.0f);
  }

  // The synthesized hop of frame t covers input hop t - 1.
  void publish_meter(FrameHandle t, float xi_db, StageDecision decision, float mean_gain, float df_delta_db) {
    MeterFrame m;
    m.frame_index = t.frame;
    m.xi_db = xi_db;
    m.decision = decision;
    m.mean_gain = mean_gain;
    m.df_delta_db = df_delta_db;
    m.in_rms_db = t.frame >= 1 ? in_rms_[(t.frame - 1) % in_rms_.size()] : kRmsFloorDb;
    m.out_rms_db = rms_dbfs(synth_hop_);
    last_meter_ = m;
    meters_.push(m);
  }

  EngineConfig structure_;
  bool has_clean_;
  ErbLayout layout_;
  StftAnalyzer analyzer_;
  StftAnalyzer clean_analyzer_;
  StftSynthesizer synthesizer_;
  MultiFrameBuffer noisy_buf_;
  MultiFrameBuffer clean_buf_;
  PassthroughEstimator passthrough_;
  BlindEstimator blind_;
  OracleEstimator oracle_;
  EstimatorOutput est_;

  Spectrum x_, s_, erb_out_, stitched_, gated_, limited_;
  std::vector<cfloat> df_low_;
  std::vector<float> in_hop_, clean_hop_, synth_hop_, pending_hop_;
  std::vector<float> in_rms_;
  bool pending_ = false;
  bool last_emitted_ = false;
  std::int64_t hops_in_ = 0;
  std::int64_t frames_processed_ = 0;

  EngineConfig active_;
  TripleBuffer<EngineConfig> live_;
  mutable std::mutex control_mutex_;
  EngineConfig control_cfg_;

  MeterRing meters_;
  MeterFrame last_meter_;

  StageTimes times_;
  double audio_s_ = 0.0;
  double wall_s_ = 0.0;
};

// Pushes `duration_s` of seeded white noise through the engine on the
// calling thread and reports timing. The noise is generated before timing starts.
inline RtfReport measure_rtf(Engine& engine, double duration_s, std::uint64_t seed) {
  const int hop = engine.hop_len();
  const auto hops = static_cast<std::size_t>(std::ceil(duration_s * kSampleRate / hop));
  std::vector<float> noise(hops * hop);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 0.1f);
  for (float& v : noise) v = dist(rng);
  std::vector<float> out(hop);

  engine.reset();
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t h = 0; h < hops; ++h) {
    std::span<const float> in(noise.data() + h * hop, hop);
    engine.process_hop(in, out, engine.has_clean_reference() ? in : std::span<const float>{});
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  RtfReport r = engine.timing();
  r.wall_time_s = wall;
  r.processed_audio_s = static_cast<double>(hops * hop) / kSampleRate;
  r.rtf = wall / r.processed_audio_s;
  return r;
}

}  // namespace dfn
