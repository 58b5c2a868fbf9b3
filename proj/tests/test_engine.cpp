#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "dfn/engine.hpp"
#include "harness.hpp"
#include "oracles.hpp"

using namespace dfn;

namespace {

EngineConfig passthrough_config() {
  EngineConfig cfg;
  cfg.estimator = EstimatorKind::passthrough;
  return cfg;
}

// Emitted hops only, concatenated, no padding or flush.
std::vector<float> emitted(Engine& e, std::span<const float> x) {
  std::vector<float> out, block(kHopLen);
  for (std::size_t h = 0; h + kHopLen <= x.size(); h += kHopLen)
    if (e.process_hop(x.subspan(h, kHopLen), block)) out.insert(out.end(), block.begin(), block.end());
  return out;
}

std::vector<float> mix(std::span<const float> a, std::span<const float> b) {
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

}  // namespace

TEST(Engine, LatencyIsFortyMilliseconds) {
  Engine e;
  EXPECT_EQ(e.latency(), 1920);
  EXPECT_EQ(e.warmup_hops(), 4);
  EXPECT_EQ(e.hop_len(), 480);
}

TEST(Engine, PassthroughDelayIsExactlyLatency) {
  const auto x = oracle::white_noise(200 * kHopLen, 1);
  Engine e(passthrough_config());
  const auto y = emitted(e, x);
  ASSERT_EQ(y.size(), x.size() - 1920);
  // Absolute output timeline: warm-up calls count as silent output.
  std::vector<float> timeline(1920, 0.0f);
  timeline.insert(timeline.end(), y.begin(), y.end());
  int best_lag = -1;
  double best = -1.0;
  for (int lag = 0; lag <= 4000; ++lag) {
    double c = 0.0;
    for (std::size_t i = 4000; i < 20000; ++i) c += timeline[i] * x[i - lag];
    if (c > best) {
      best = c;
      best_lag = lag;
    }
  }
  EXPECT_EQ(best_lag, 1920);
  EXPECT_LE(oracle::error_db(timeline, x, 1920, 1920, timeline.size()), -60.0);
}

TEST(Engine, ZeroInputGivesZeroOutput) {
  for (auto kind : {EstimatorKind::passthrough, EstimatorKind::blind}) {
    EngineConfig cfg;
    cfg.estimator = kind;
    Engine e(cfg);
    const std::vector<float> x(100 * kHopLen, 0.0f);
    for (float v : emitted(e, x)) ASSERT_EQ(v, 0.0f);
  }
}

TEST(Engine, WarmupThenOneHopPerCallAndFlushDrains) {
  Engine e;
  std::vector<float> in(kHopLen, 0.1f), out(kHopLen);
  for (int k = 0; k < 4; ++k) EXPECT_FALSE(e.process_hop(in, out)) << k;
  for (int k = 0; k < 10; ++k) EXPECT_TRUE(e.process_hop(in, out));
  EXPECT_EQ(e.hops_in(), 14);
  const auto x = oracle::white_noise(37 * kHopLen + 123, 2);
  EXPECT_EQ(harness::run_engine(passthrough_config(), x).size(), x.size());
}

TEST(Engine, FlushRecoversTail) {
  const auto x = oracle::white_noise(50 * kHopLen, 3);
  const auto y = harness::run_engine(passthrough_config(), x);
  EXPECT_LE(oracle::error_db(y, x, 0, 0, y.size()), -60.0);
  EXPECT_LE(oracle::error_db(y, x, 0, y.size() - 1920, y.size()), -60.0);
}

TEST(Engine, RejectsWrongHopSizes) {
  Engine e;
  std::vector<float> in(kHopLen), out(kHopLen), small(10);
  EXPECT_THROW(e.process_hop(small, out), std::invalid_argument);
  EXPECT_THROW(e.process_hop(in, small), std::invalid_argument);
  EXPECT_THROW(e.process_hop(in, out, small), std::invalid_argument);
}

TEST(Engine, OracleDfBeatsErbOnlyOnSineInNoise) {
  const std::size_t n = 3 * kSampleRate;
  const auto s = oracle::sine(n, 1000.0, 0.1 * std::sqrt(2.0));
  const auto x = mix(s, oracle::white_noise(n, 4, 0.1));
  EngineConfig full;
  full.estimator = EstimatorKind::oracle;
  EngineConfig erb_only = full;
  erb_only.df_enabled = false;
  const auto y_full = harness::run_engine(full, x, s);
  const auto y_erb = harness::run_engine(erb_only, x, s);
  const double snr_full = harness::band_segmental_snr(y_full, s, 96, kSampleRate / 2);
  const double snr_erb = harness::band_segmental_snr(y_erb, s, 96, kSampleRate / 2);
  EXPECT_GE(snr_full - snr_erb, 3.0) << "full " << snr_full << " erb " << snr_erb;
}

TEST(Engine, OracleRequiresCleanReference) {
  EngineConfig cfg;
  cfg.estimator = EstimatorKind::oracle;
  EXPECT_THROW(Engine{cfg}, std::invalid_argument);
  Engine e;
  EXPECT_THROW(e.update_config(cfg), std::invalid_argument);
  Engine with_clean(EngineConfig{}, true);
  EXPECT_NO_THROW(with_clean.update_config(cfg));
  std::vector<float> in(kHopLen), out(kHopLen);
  EXPECT_THROW(with_clean.process_hop(in, out), std::invalid_argument);
}

TEST(EngineConfigUpdate, ZeroAttenuationPassesNoisyWithinTwoHops) {
  const auto x = oracle::white_noise(120 * kHopLen, 5);
  Engine e;
  std::vector<float> block(kHopLen), y;
  const int switch_call = 60;
  std::vector<int> call_of_hop;
  for (int k = 0; k < 120; ++k) {
    if (k == switch_call) {
      auto cfg = e.snapshot_config();
      cfg.atten.max_atten_db = 0.0f;
      e.update_config(cfg);
    }
    if (e.process_hop(std::span<const float>(x).subspan(k * kHopLen, kHopLen), block)) {
      y.insert(y.end(), block.begin(), block.end());
      call_of_hop.push_back(k);
    }
  }
  // Emitted hop j is input hop j. Before the switch the blind estimator suppresses noise.
  const std::size_t first_exact = (switch_call + 2 - 4) * kHopLen;
  EXPECT_GT(oracle::error_db(y, x, 0, 20 * kHopLen, (switch_call - 4) * kHopLen), -10.0);
  EXPECT_LE(oracle::error_db(y, x, 0, first_exact, y.size()), -60.0);
  EXPECT_EQ(call_of_hop[switch_call + 2 - 4], switch_call + 2);
}

TEST(EngineConfigUpdate, InvalidThresholdsRejectedAndStateKept) {
  Engine e;
  const auto before = e.snapshot_config();
  auto bad = before;
  bad.thresholds.df_off_above_db = 40.0f;
  EXPECT_THROW(e.update_config(bad), std::invalid_argument);
  EXPECT_EQ(e.snapshot_config(), before);
  bad = before;
  bad.atten.max_atten_db = -3.0f;
  EXPECT_THROW(e.update_config(bad), std::invalid_argument);
  bad = before;
  bad.df.order_n = 3;
  EXPECT_THROW(e.update_config(bad), std::invalid_argument);
  EXPECT_EQ(e.snapshot_config(), before);
}

TEST(EngineConfigUpdate, DisablingDfNeverRunsFullPath) {
  EngineConfig cfg;
  cfg.df_enabled = false;
  Engine e(cfg);
  const auto x = mix(oracle::sine(200 * kHopLen, 700.0, 0.05), oracle::white_noise(200 * kHopLen, 6, 0.05));
  emitted(e, x);
  int meters = 0;
  while (auto m = e.meters().pop()) {
    EXPECT_NE(m->decision, StageDecision::full);
    ++meters;
  }
  EXPECT_GT(meters, 100);
}

TEST(Engine, DeterministicAcrossInstances) {
  const auto x = mix(oracle::sine(150 * kHopLen, 440.0, 0.2), oracle::white_noise(150 * kHopLen, 7));
  const auto a = harness::run_engine(EngineConfig{}, x);
  const auto b = harness::run_engine(EngineConfig{}, x);
  EXPECT_EQ(a, b);
  Engine e;
  const auto c = harness::run_engine(e, x);
  e.reset();
  EXPECT_EQ(harness::run_engine(e, x), c);
}

TEST(Engine, NonFiniteInputIsZeroedAndReported) {
  Engine e(passthrough_config());
  std::vector<float> in(kHopLen, 0.1f), out(kHopLen);
  for (int k = 0; k < 6; ++k) e.process_hop(in, out);
  std::vector<float> bad = in;
  bad[17] = std::nanf("");
  EXPECT_THROW(e.process_hop(bad, out), NumericError);
  EXPECT_TRUE(e.last_hop_emitted());
  EXPECT_EQ(e.hops_in(), 7);
  for (int k = 0; k < 6; ++k) {
    ASSERT_TRUE(e.process_hop(in, out));
    for (float v : out) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Engine, MetersTrackFramesAndStayInRange) {
  Engine e;
  const auto x = mix(oracle::sine(100 * kHopLen, 1000.0, 0.3), oracle::white_noise(100 * kHopLen, 8, 0.03));
  emitted(e, x);
  std::int64_t expect = 0;
  while (auto m = e.meters().pop()) {
    EXPECT_EQ(m->frame_index, expect++);
    EXPECT_GE(m->xi_db, -15.0f);
    EXPECT_LE(m->xi_db, 35.0f);
    EXPECT_EQ(m->decision, decide(m->xi_db, GateThresholds{}));
    EXPECT_GE(m->mean_gain, 0.0f);
    EXPECT_LE(m->mean_gain, 1.0f);
    EXPECT_GE(m->in_rms_db, kRmsFloorDb);
  }
  EXPECT_EQ(expect, 98);
  EXPECT_EQ(e.frames_processed(), 98);
}

TEST(Engine, MeterLevelsFollowPassthroughSignal) {
  Engine e(passthrough_config());
  const auto x = oracle::white_noise(60 * kHopLen, 9, 0.1);
  emitted(e, x);
  int checked = 0;
  while (auto m = e.meters().pop()) {
    if (m->frame_index < 3) continue;
    EXPECT_NEAR(m->out_rms_db, m->in_rms_db, 0.01f) << m->frame_index;
    EXPECT_NEAR(m->in_rms_db, -20.0f, 1.5f);
    ++checked;
  }
  EXPECT_GT(checked, 50);
}

TEST(Rtf, ReportsConsistentTiming) {
  Engine e;
  const auto r = measure_rtf(e, 2.0, 1);
  EXPECT_NEAR(r.processed_audio_s, 2.0, 0.01);
  EXPECT_GT(r.wall_time_s, 0.0);
  EXPECT_NEAR(r.rtf, r.wall_time_s / r.processed_audio_s, 1e-12);
  EXPECT_LE(r.stages.sum(), r.wall_time_s * 1.05);
  EXPECT_LT(r.rtf, 1.0);
}

TEST(Rtf, PassthroughCheaperThanBlind) {
  Engine pass(passthrough_config()), blind;
  double best_pass = 1e9, best_blind = 1e9;
  for (int rep = 0; rep < 7; ++rep) {
    best_pass = std::min(best_pass, measure_rtf(pass, 3.0, 11).rtf);
    best_blind = std::min(best_blind, measure_rtf(blind, 3.0, 11).rtf);
  }
  EXPECT_LT(best_pass, best_blind);
}

TEST(TripleBuffer, ReaderSeesLatestCompleteValue) {
  TripleBuffer<int> tb(0);
  EXPECT_EQ(tb.read(), 0);
  tb.publish(1);
  tb.publish(2);
  EXPECT_EQ(tb.read(), 2);
  EXPECT_EQ(tb.read(), 2);
  tb.publish(3);
  EXPECT_EQ(tb.read(), 3);
}

TEST(TripleBuffer, ConcurrentSnapshotsAreNeverTorn) {
  struct Pair {
    std::int64_t a = 0, b = 0;
  };
  TripleBuffer<Pair> tb;
  std::atomic<bool> done{false};
  std::thread writer([&] {
    for (std::int64_t i = 1; i <= 200000; ++i) tb.publish({i, -i});
    done = true;
  });
  std::int64_t last = 0;
  while (!done.load()) {
    const Pair p = tb.read();
    ASSERT_EQ(p.a, -p.b);
    ASSERT_GE(p.a, last);
    last = p.a;
  }
  writer.join();
  EXPECT_EQ(tb.read().a, 200000);
}

TEST(DropOldestRing, KeepsNewestWhenFull) {
  DropOldestRing<int, 8> ring;
  for (int i = 0; i < 20; ++i) ring.push(i);
  std::vector<int> got;
  while (auto v = ring.pop()) got.push_back(*v);
  EXPECT_EQ(got, (std::vector<int>{12, 13, 14, 15, 16, 17, 18, 19}));
  EXPECT_EQ(ring.dropped(), 12u);
  EXPECT_EQ(ring.pushed(), 20u);
  EXPECT_FALSE(ring.pop().has_value());
}

TEST(DropOldestRing, ConcurrentConsumerSeesIncreasingIntactEntries) {
  struct Entry {
    std::int64_t seq = 0, check = 0;
  };
  DropOldestRing<Entry, 64> ring;
  std::atomic<bool> done{false};
  std::thread producer([&] {
    for (std::int64_t i = 0; i < 300000; ++i) ring.push({i, ~i});
    done = true;
  });
  std::int64_t last = -1, received = 0;
  for (;;) {
    const bool finished = done.load();
    while (auto e = ring.pop()) {
      ASSERT_EQ(e->check, ~e->seq);
      ASSERT_GT(e->seq, last);
      last = e->seq;
      ++received;
    }
    if (finished) break;
  }
  producer.join();
  EXPECT_EQ(last, 299999);
  EXPECT_EQ(received + static_cast<std::int64_t>(ring.dropped()), 300000);
}
