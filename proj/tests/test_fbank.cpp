#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "dialign/fbank.hpp"
#include "dialign/random.hpp"

using namespace dialign;

namespace {

AudioBuffer tone(double hz, double seconds, double amp = 0.5) {
  AudioBuffer a;
  a.samples.resize(static_cast<std::size_t>(seconds * kSampleRateHz));
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    a.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * i / kSampleRateHz));
  return a;
}

AudioBuffer noise(std::uint64_t seed, std::size_t n, double sigma) {
  SplitMix64 rng(seed);
  AudioBuffer a;
  a.samples.resize(n);
  for (float& v : a.samples) v = static_cast<float>(sigma * rng.gaussian());
  return a;
}

/// Filter centre frequencies computed directly from the mel-scale
/// definition: bins+2 points equally spaced in mel over [20 Hz, 8 kHz].
std::vector<double> oracle_centers(int bins) {
  auto mel = [](double f) { return 1127.0 * std::log(1.0 + f / 700.0); };
  const double lo = mel(20.0), hi = mel(8000.0);
  std::vector<double> c;
  for (int b = 1; b <= bins; ++b) c.push_back(700.0 * (std::exp((lo + b * (hi - lo) / (bins + 1)) / 1127.0) - 1.0));
  return c;
}

}  // namespace

TEST(Fbank, OneSecondGivesNinetyEightFrames) {
  const auto f = compute_fbank(AudioBuffer{std::vector<float>(16000, 0.0f), kSampleRateHz});
  EXPECT_EQ(f.num_frames, 98u);
  EXPECT_EQ(f.num_bins, 80u);
}

TEST(Fbank, FrameCountFormula) {
  EXPECT_EQ(num_frames_for(16000, 400, 160), 98u);
  EXPECT_EQ(num_frames_for(400, 400, 160), 1u);
  EXPECT_EQ(num_frames_for(559, 400, 160), 1u);
  EXPECT_EQ(num_frames_for(560, 400, 160), 2u);
  EXPECT_EQ(num_frames_for(399, 400, 160), 0u);
  EXPECT_EQ(num_frames_for(0, 400, 160), 0u);
}

TEST(Fbank, ShortAudioGivesEmptyMatrix) {
  const auto f = compute_fbank(AudioBuffer{std::vector<float>(399, 0.1f), kSampleRateHz});
  EXPECT_EQ(f.num_frames, 0u);
  EXPECT_TRUE(f.data.empty());
}

TEST(Fbank, SilenceSitsOnTheFloor) {
  const auto f = compute_fbank(AudioBuffer{std::vector<float>(4000, 0.0f), kSampleRateHz});
  ASSERT_GT(f.num_frames, 0u);
  for (double v : f.data) EXPECT_EQ(v, std::log(1e-10));
}

TEST(Fbank, FilterCentresMatchTheMelScale) {
  const FbankComputer fb;
  const auto expect = oracle_centers(80);
  ASSERT_EQ(fb.filters().size(), expect.size());
  for (std::size_t b = 0; b < expect.size(); ++b) EXPECT_NEAR(fb.filters()[b].center_hz, expect[b], 1e-6);
}

TEST(Fbank, PureToneLightsTheNearestCentreBin) {
  const auto centers = oracle_centers(80);
  std::size_t nearest = 0;
  for (std::size_t b = 1; b < centers.size(); ++b)
    if (std::abs(centers[b] - 440.0) < std::abs(centers[nearest] - 440.0)) nearest = b;
  EXPECT_EQ(nearest, 14u);

  const auto f = compute_fbank(tone(440.0, 1.0));
  for (std::size_t t = 0; t < f.num_frames; ++t) {
    const auto row = f.row(t);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    ASSERT_EQ(best, nearest) << "frame " << t;
  }
}

TEST(Fbank, GainShiftsLogEnergiesByTwiceLogGain) {
  const AudioBuffer base = noise(3, 8000, 0.05);
  const auto f0 = compute_fbank(base);
  const double floor_margin = std::log(1e-10) + 1.0;
  for (double c : {0.25, 2.0, 7.0}) {
    AudioBuffer scaled = base;
    for (float& v : scaled.samples) v = static_cast<float>(v * c);
    const auto fc = compute_fbank(scaled);
    std::size_t checked = 0;
    for (std::size_t i = 0; i < f0.data.size(); ++i) {
      if (f0.data[i] < floor_margin || fc.data[i] < floor_margin) continue;
      ASSERT_NEAR(fc.data[i] - f0.data[i], 2.0 * std::log(c), 1e-6);
      ++checked;
    }
    EXPECT_GT(checked, f0.data.size() / 2);
  }
}

TEST(Fbank, IdenticalInputGivesBitIdenticalOutput) {
  const AudioBuffer a = noise(9, 5000, 0.3);
  EXPECT_EQ(compute_fbank(a).data, compute_fbank(a).data);
}

TEST(Fbank, FilterWeightsFormAPartitionBetweenCentres) {
  const FbankComputer fb;
  const auto& filters = fb.filters();
  const double bin_hz = 16000.0 / static_cast<double>(fb.fft_size());
  for (std::size_t k = 0; k <= fb.fft_size() / 2; ++k) {
    const double hz = k * bin_hz;
    if (hz < filters.front().center_hz || hz > filters.back().center_hz) continue;
    double sum = 0.0;
    for (const auto& f : filters)
      if (k >= f.first_fft_bin && k < f.first_fft_bin + f.weights.size()) sum += f.weights[k - f.first_fft_bin];
    EXPECT_GT(sum, 0.0) << "bin " << k;
    EXPECT_LE(sum, 1.0 + 1e-6) << "bin " << k;
  }
}

TEST(Fbank, RejectsWrongSampleRate) {
  EXPECT_THROW(compute_fbank(AudioBuffer{std::vector<float>(8000), 8000}), Error);
}

TEST(Fbank, RejectsZeroBins) {
  FbankOptions o;
  o.num_bins = 0;
  EXPECT_THROW(FbankComputer{o}, Error);
}

TEST(Fbank, CustomFramingFollowsTheFormula) {
  FbankOptions o;
  o.num_bins = 40;
  o.frame_length_ms = 32;
  o.frame_shift_ms = 16;
  const auto f = compute_fbank(AudioBuffer{std::vector<float>(16000, 0.0f), kSampleRateHz}, o);
  EXPECT_EQ(f.num_bins, 40u);
  EXPECT_EQ(f.num_frames, 1u + (16000u - 512u) / 256u);
}

TEST(Mel, ScaleRoundTrips) {
  EXPECT_NEAR(hz_to_mel(700.0), 1127.0 * std::log(2.0), 1e-12);
  for (double hz : {0.0, 20.0, 440.0, 1000.0, 8000.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(hz)), hz, 1e-9);
}

TEST(FftTest, MatchesDirectDft) {
  SplitMix64 rng(4);
  for (std::size_t n : {1u, 2u, 8u, 64u, 512u}) {
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    std::vector<std::complex<double>> ref(n);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < n; ++j)
        ref[k] += x[j] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(j * k % n) / n);
    Fft fft(n);
    fft.forward(x);
    for (std::size_t k = 0; k < n; ++k) ASSERT_LT(std::abs(x[k] - ref[k]), 1e-9) << "n=" << n << " k=" << k;
  }
}
