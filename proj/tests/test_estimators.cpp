#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dfn/estimators.hpp"
#include "dfn/stft.hpp"
#include "oracles.hpp"

using namespace dfn;

namespace {

const ErbLayout& layout() {
  static const ErbLayout l = design_layout(StftConfig{});
  return l;
}

std::vector<Spectrum> analyze(std::span<const float> x) {
  StftAnalyzer a;
  std::vector<Spectrum> out;
  for (std::size_t h = 0; h + kHopLen <= x.size(); h += kHopLen) out.push_back(a.analyze(x.subspan(h, kHopLen)));
  return out;
}

Spectrum random_spectrum(std::mt19937_64& rng, float scale = 1.0f) {
  std::normal_distribution<float> d(0.0f, scale);
  Spectrum s;
  for (auto& b : s.bins) b = cfloat(d(rng), d(rng));
  return s;
}

std::vector<float> mix(std::span<const float> a, std::span<const float> b) {
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

constexpr int kFramesPerSecond = kSampleRate / kHopLen;

}  // namespace

TEST(LocalSnr, EqualEnergyIsZeroDb) {
  std::mt19937_64 rng(1);
  const Spectrum s = random_spectrum(rng);
  EXPECT_NEAR(local_snr(s, s).db(), 0.0f, 1e-6f);
}

TEST(LocalSnr, TenDbForTenfoldPower) {
  std::mt19937_64 rng(2);
  const Spectrum z = random_spectrum(rng);
  Spectrum s = z;
  for (auto& b : s.bins) b *= std::sqrt(10.0f);
  EXPECT_NEAR(local_snr(s, z).db(), 10.0f, 1e-4f);
}

TEST(LocalSnr, ClampsAtBothEnds) {
  std::mt19937_64 rng(3);
  const Spectrum s = random_spectrum(rng);
  EXPECT_EQ(local_snr(s, Spectrum{}).db(), 35.0f);
  EXPECT_EQ(local_snr(Spectrum{}, s).db(), -15.0f);
  EXPECT_EQ(local_snr(Spectrum{}, Spectrum{}).db(), -15.0f);
  Spectrum tiny = s;
  for (auto& b : tiny.bins) b *= 1e-3f;
  EXPECT_EQ(local_snr(tiny, s).db(), -15.0f);
  EXPECT_EQ(local_snr(s, tiny).db(), 35.0f);
}

TEST(SnrEstimate, NanMapsToLowerClamp) { EXPECT_EQ(SnrEstimate(std::nan("")).db(), -15.0f); }

TEST(OracleEstimate, CleanEqualsNoisyIsPassthrough) {
  std::mt19937_64 rng(4);
  std::vector<Spectrum> x;
  for (int k = 0; k < 32; ++k) x.push_back(random_spectrum(rng));
  const auto out = oracle_estimate(x, x, layout(), DfConfig{});
  for (int b = 0; b < 32; ++b) EXPECT_NEAR(out.gains[b], 1.0f, 1e-6f);
  EXPECT_EQ(out.snr.db(), 35.0f);
  const auto id = DfCoefSet::identity(DfConfig{});
  for (std::size_t i = 0; i < id.data().size(); ++i) EXPECT_LE(std::abs(out.coefs.data()[i] - id.data()[i]), 1e-3f);
}

TEST(OracleEstimate, ZeroCleanGivesZeroGains) {
  std::mt19937_64 rng(5);
  std::vector<Spectrum> x, zero(32);
  for (int k = 0; k < 32; ++k) x.push_back(random_spectrum(rng));
  const auto out = oracle_estimate(x, zero, layout(), DfConfig{});
  for (int b = 0; b < 32; ++b) EXPECT_EQ(out.gains[b], 0.0f);
  EXPECT_EQ(out.snr.db(), -15.0f);
}

TEST(OracleEstimate, GainsNeverExceedOne) {
  std::mt19937_64 rng(6);
  std::vector<Spectrum> x, s;
  for (int k = 0; k < 32; ++k) {
    x.push_back(random_spectrum(rng, 0.1f));
    s.push_back(random_spectrum(rng, 1.0f));
  }
  const auto out = oracle_estimate(x, s, layout(), DfConfig{});
  for (int b = 0; b < 32; ++b) EXPECT_EQ(out.gains[b], 1.0f);
}

TEST(OracleEstimate, MinusSixDbBandGain) {
  // Clean and noise independent white processes with noise 6 dB stronger:
  // expected gain sqrt(Ps / (Ps + Pn)) = sqrt(1 / (1 + 4)).
  const double expected = std::sqrt(0.2);
  const std::size_t frames = 160;
  const auto s = oracle::white_noise(frames * kHopLen, 21, 0.05);
  const auto z = oracle::white_noise(frames * kHopLen, 22, 0.10);
  const auto fx = analyze(mix(s, z)), fs = analyze(s);
  const int band = layout().band_of(100);
  const int window = 32;
  double sum = 0.0;
  int count = 0;
  for (std::size_t end = window; end <= frames; ++end) {
    const std::vector<Spectrum> wx(fx.begin() + (end - window), fx.begin() + end);
    const std::vector<Spectrum> ws(fs.begin() + (end - window), fs.begin() + end);
    sum += oracle_estimate(wx, ws, layout(), DfConfig{}).gains[band];
    ++count;
  }
  ASSERT_GE(count, 100);
  EXPECT_NEAR(sum / count, expected, 0.1 * expected);
}

TEST(OracleEstimateProperty, ScaleConsistent) {
  std::mt19937_64 rng(7);
  for (float scale : {1e-3f, 0.1f, 7.0f, 300.0f}) {
    std::vector<Spectrum> x, s, xs, ss;
    for (int k = 0; k < 32; ++k) {
      s.push_back(random_spectrum(rng));
      Spectrum n = random_spectrum(rng, 0.8f);
      for (int f = 0; f < kBins; ++f) n.bins[f] += s.back().bins[f];
      x.push_back(n);
      Spectrum a = x.back(), b = s.back();
      for (auto& v : a.bins) v *= scale;
      for (auto& v : b.bins) v *= scale;
      xs.push_back(a);
      ss.push_back(b);
    }
    const auto o1 = oracle_estimate(x, s, layout(), DfConfig{});
    const auto o2 = oracle_estimate(xs, ss, layout(), DfConfig{});
    for (int b = 0; b < 32; ++b) EXPECT_NEAR(o1.gains[b], o2.gains[b], 1e-6f) << scale;
    EXPECT_NEAR(o1.snr.db(), o2.snr.db(), 1e-5f) << scale;
  }
}

TEST(OracleEstimate, TargetIsLookaheadDelayedFrame) {
  std::mt19937_64 rng(8);
  std::vector<Spectrum> x, s;
  for (int k = 0; k < 32; ++k) {
    x.push_back(random_spectrum(rng));
    s.push_back(k == 29 ? x.back() : Spectrum{});
  }
  // With l = 2 the target is index 29 of 32, whose clean frame equals the noisy one.
  const auto out = oracle_estimate(x, s, layout(), DfConfig{});
  for (int b = 0; b < 32; ++b) EXPECT_NEAR(out.gains[b], 1.0f, 1e-6f);
}

TEST(BlindEstimate, StationaryNoiseIsSuppressedWithinThreeSeconds) {
  const int frames = 6 * kFramesPerSecond;
  const auto fx = analyze(oracle::white_noise(frames * kHopLen, 31, 0.1));
  NoiseFloorState state(32);
  const int settle = 3 * kFramesPerSecond;
  std::vector<double> acc(32, 0.0);
  for (int t = 0; t < frames; ++t) {
    const auto out = blind_estimate(state, fx[t], layout(), DfConfig{});
    if (t >= settle) {
      for (int b = 0; b < 32; ++b) acc[b] += out.gains[b];
    }
  }
  // Converged level: mean gain over the 3 s after settling. Single frames in
  // the 2-bin bands still fluctuate above it.
  for (int b = 0; b < 32; ++b) EXPECT_LT(acc[b] / (frames - settle), 0.3) << "band " << b;
}

TEST(BlindEstimate, SilenceGivesZeroGainsAndLowSnr) {
  NoiseFloorState state(32);
  for (int t = 0; t < 50; ++t) {
    const auto out = blind_estimate(state, Spectrum{}, layout(), DfConfig{});
    for (int b = 0; b < 32; ++b) ASSERT_EQ(out.gains[b], 0.0f);
    ASSERT_EQ(out.snr.db(), -15.0f);
  }
}

TEST(BlindEstimate, ToneBandPassesFarBandsSuppressed) {
  const int noise_frames = 2 * kFramesPerSecond;
  const int tone_frames = 2 * kFramesPerSecond;
  const std::size_t n = (noise_frames + tone_frames) * kHopLen;
  const auto z = oracle::white_noise(n, 41, 0.01);
  auto s = oracle::sine(n, 1000.0, 0.1);
  std::fill(s.begin(), s.begin() + noise_frames * kHopLen, 0.0f);
  const auto fx = analyze(mix(s, z));
  const int tone_band = layout().band_of(20);
  NoiseFloorState state(32);
  std::vector<double> acc(32, 0.0);
  const int eval_from = noise_frames + tone_frames / 2;
  for (int t = 0; t < noise_frames + tone_frames; ++t) {
    const auto out = blind_estimate(state, fx[t], layout(), DfConfig{});
    if (t >= eval_from) {
      for (int b = 0; b < 32; ++b) acc[b] += out.gains[b];
    }
  }
  const int count = noise_frames + tone_frames - eval_from;
  EXPECT_GT(acc[tone_band] / count, 0.9);
  // Far: every bin at least 10 bins from the tone, beyond the window's leakage
  // at this tone-to-noise ratio.
  for (int b = 0; b < 32; ++b) {
    if (layout().edges[b + 1] - 1 <= 10 || layout().edges[b] >= 30) {
      EXPECT_LT(acc[b] / count, 0.3) << "band " << b;
    }
  }
}

TEST(BlindEstimateProperty, Causal) {
  // Two streams sharing a prefix produce identical outputs over the prefix.
  std::mt19937_64 rng(9);
  std::vector<Spectrum> a, b;
  for (int k = 0; k < 80; ++k) a.push_back(random_spectrum(rng));
  b = a;
  for (int k = 40; k < 80; ++k) b[k] = random_spectrum(rng, 5.0f);
  NoiseFloorState sa(32), sb(32);
  for (int k = 0; k < 40; ++k) {
    const auto oa = blind_estimate(sa, a[k], layout(), DfConfig{});
    const auto ob = blind_estimate(sb, b[k], layout(), DfConfig{});
    for (int band = 0; band < 32; ++band) ASSERT_EQ(oa.gains[band], ob.gains[band]);
    ASSERT_EQ(oa.snr.db(), ob.snr.db());
  }
}

TEST(BlindEstimateProperty, OutputsStayInRange) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<float> level(-6.0f, 2.0f);
  NoiseFloorState state(32);
  for (int k = 0; k < 300; ++k) {
    const auto out = blind_estimate(state, random_spectrum(rng, std::pow(10.0f, level(rng))), layout(), DfConfig{});
    for (int b = 0; b < 32; ++b) {
      ASSERT_GE(out.gains[b], 0.0f);
      ASSERT_LE(out.gains[b], 1.0f);
    }
    ASSERT_GE(out.snr.db(), -15.0f);
    ASSERT_LE(out.snr.db(), 35.0f);
    ASSERT_EQ(out.coefs, DfCoefSet::identity(DfConfig{}));
  }
}

TEST(BlindEstimate, FloorFollowsLevelDropImmediatelyAndRiseSlowly) {
  NoiseFloorState state(1);
  std::vector<double> p{1.0};
  for (int k = 0; k < 20; ++k) state.update(p);
  p[0] = 0.01;
  for (int k = 0; k < 80; ++k) state.update(p);
  EXPECT_NEAR(state.floor()[0], 0.01, 1e-5);
  p[0] = 1.0;
  for (int k = 0; k < kFramesPerSecond; ++k) state.update(p);
  // One second of rise at 4 dB/s.
  EXPECT_NEAR(10.0 * std::log10(state.floor()[0] / 0.01), 4.0, 0.05);
}

TEST(EstimatorKindNames, RoundTrip) {
  for (auto k : {EstimatorKind::passthrough, EstimatorKind::blind, EstimatorKind::oracle}) {
    EstimatorKind parsed{};
    ASSERT_TRUE(parse_estimator_kind(to_string(k), parsed));
    EXPECT_EQ(parsed, k);
  }
  EstimatorKind parsed{};
  EXPECT_FALSE(parse_estimator_kind("learned", parsed));
}

TEST(OracleEstimator, RequiresCleanReference) {
  OracleEstimator est(layout(), DfConfig{});
  MultiFrameBuffer noisy(DfConfig{}, est.window());
  std::optional<FrameHandle> h;
  for (int k = 0; k < 40; ++k) h = noisy.push(Spectrum{});
  EstimatorOutput out(layout(), DfConfig{});
  EXPECT_THROW(est.estimate({noisy, nullptr, *h}, out), std::invalid_argument);
}

TEST(PassthroughEstimator, UnitGainsIdentityTapsTopSnr) {
  PassthroughEstimator est{DfConfig{}};
  MultiFrameBuffer noisy;
  std::optional<FrameHandle> h;
  for (int k = 0; k < 5; ++k) h = noisy.push(Spectrum{});
  EstimatorOutput out(layout(), DfConfig{});
  out.gains.fill(0.0f);
  est.estimate({noisy, nullptr, *h}, out);
  EXPECT_EQ(out.gains.mean(), 1.0f);
  EXPECT_EQ(out.coefs, DfCoefSet::identity(DfConfig{}));
  EXPECT_EQ(out.snr.db(), 35.0f);
}
