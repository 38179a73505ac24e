#include "edm_atlas/audio_io.hpp"
#include "edm_atlas/tempogram.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace edm_atlas;

namespace {

double axis_value(const Tempogram& tg, Eigen::Index bin) { return tg.tempo_axis[static_cast<std::size_t>(bin)]; }

Eigen::RowVectorXd time_mean(const Matrix& m) { return m.colwise().mean(); }

NoveltyCurve impulse_train(std::size_t n, std::size_t period, double frame_rate) {
  NoveltyCurve nov{std::vector<double>(n, 0.0), frame_rate};
  for (std::size_t i = 0; i < n; i += period) nov.values[i] = 1.0;
  return nov;
}

Tempogram flat_tempogram(double value) {
  Tempogram tg;
  tg.tempo_axis = default_tempo_axis();
  tg.magnitudes = Matrix::Constant(3, static_cast<Eigen::Index>(tg.tempo_axis.size()), value);
  return tg;
}

}  // namespace

TEST(Novelty, ConstantSpectrumGivesZero) {
  Spectrogram s;
  s.magnitudes = Matrix::Constant(50, 10, 0.3);
  s.frame_rate = 43.0;
  for (int i = 0; i < 10; ++i) s.bin_freqs.push_back(10.0 * i);
  for (double v : novelty_curve(s).values) EXPECT_EQ(v, 0.0);
}

TEST(Novelty, ClickPeaksHalfSecondApart) {
  const Spectrogram s = stft(synth_click_track(120, 10));
  const NoveltyCurve nov = novelty_curve(s);
  // Local maxima above half the global maximum.
  const double top = *std::max_element(nov.values.begin(), nov.values.end());
  std::vector<std::size_t> peaks;
  for (std::size_t i = 1; i + 1 < nov.values.size(); ++i) {
    if (nov.values[i] > 0.5 * top && nov.values[i] >= nov.values[i - 1] && nov.values[i] > nov.values[i + 1]) peaks.push_back(i);
  }
  ASSERT_GE(peaks.size(), 10u);
  for (std::size_t i = 1; i < peaks.size(); ++i) {
    EXPECT_NEAR((static_cast<double>(peaks[i] - peaks[i - 1])) / nov.frame_rate, 0.5, 1.0 / nov.frame_rate);
  }
}

std::vector<std::size_t> novelty_peaks(const NoveltyCurve& n) {
  const double top = *std::max_element(n.values.begin(), n.values.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i + 1 < n.values.size(); ++i) {
    if (n.values[i] > 0.5 * top && n.values[i] >= n.values[i - 1] && n.values[i] > n.values[i + 1]) out.push_back(i);
  }
  return out;
}

// Click period of exactly 20 hops, so every click meets the frame grid at the
// same phase and no peak is a near-tie between neighbouring frames.
TEST(Novelty, LouderCopyKeepsPeakPositions) {
  const double bpm = 22050.0 * 60.0 / (20 * 512);
  AudioClip c = synth_click_track(bpm, 10);
  AudioClip loud = c;
  for (double& v : loud.samples) v *= 2.0;
  const auto a = novelty_peaks(novelty_curve(stft(c)));
  EXPECT_GE(a.size(), 15u);
  EXPECT_EQ(a, novelty_peaks(novelty_curve(stft(loud))));
}

// Off-grid tempo: clicks straddling a hop boundary may move by one frame.
TEST(Novelty, LouderCopyPeaksWithinOneFrame) {
  AudioClip c = synth_click_track(128, 10);
  AudioClip loud = c;
  for (double& v : loud.samples) v *= 2.0;
  const auto a = novelty_peaks(novelty_curve(stft(c)));
  const auto b = novelty_peaks(novelty_curve(stft(loud)));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LE(std::max(a[i], b[i]) - std::min(a[i], b[i]), 1u);
}

TEST(FourierTempogram, ClickTempoRecovered) {
  for (double bpm : {80.0, 120.0, 128.0, 174.0}) {
    const Tempogram tg = fourier_tempogram(novelty_curve(stft(synth_click_track(bpm, 10))));
    EXPECT_NEAR(axis_value(tg, time_averaged_argmax(tg.magnitudes)), bpm, 1.0) << bpm;
  }
}

TEST(FourierTempogram, CapturesHarmonics) {
  const Tempogram tg = fourier_tempogram(novelty_curve(stft(synth_click_track(60, 10))));
  const auto m = time_mean(tg.magnitudes);
  EXPECT_GE(m(120 - 30), 0.5 * m(60 - 30));
}

TEST(FourierTempogram, ZeroNoveltyGivesZero) {
  const NoveltyCurve nov{std::vector<double>(500, 0.0), 43.0};
  EXPECT_EQ(fourier_tempogram(nov).magnitudes.maxCoeff(), 0.0);
  EXPECT_EQ(autocorr_tempogram(nov).magnitudes.maxCoeff(), 0.0);
}

TEST(FourierTempogram, MatchesDirectDft) {
  oracle::Lcg rng(4);
  NoveltyCurve nov{std::vector<double>(600), 40.0};
  for (double& v : nov.values) v = rng.uniform();
  const Tempogram tg = fourier_tempogram(nov);
  ASSERT_EQ(tg.magnitudes.rows(), 8);
  const int win = 320;  // 8 s at 40 frames/s
  std::vector<double> w(win);
  double wsum = 0;
  for (int i = 0; i < win; ++i) wsum += w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2 * M_PI * i / win);
  for (int frame : {0, 3, 7}) {
    std::vector<double> seg(win);
    for (int i = 0; i < win; ++i) seg[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)] * nov.values[static_cast<std::size_t>(frame * 40 + i)];
    for (double bpm : {30.0, 97.0, 240.0, 480.0}) {
      const double expected = oracle::dft_magnitude(seg, bpm / 60.0 / 40.0) / wsum;
      EXPECT_NEAR(tg.magnitudes(frame, static_cast<Eigen::Index>(bpm - 30)), expected, 1e-9);
    }
  }
}

TEST(FourierTempogram, RejectsShortNovelty) {
  EXPECT_THROW(fourier_tempogram(NoveltyCurve{std::vector<double>(100, 1.0), 43.0}), std::invalid_argument);
}

TEST(AutocorrTempogram, PeakAndSubharmonic) {
  const Tempogram tg = autocorr_tempogram(novelty_curve(stft(synth_click_track(120, 10))));
  const auto m = time_mean(tg.magnitudes);
  Eigen::Index arg = 0;
  m.maxCoeff(&arg);
  EXPECT_NEAR(axis_value(tg, arg), 120.0, 2.0);
  // Strongest bin in 50..70 BPM sits at the half tempo and is a local peak.
  Eigen::Index sub = 0;
  m.segment(50 - 30, 21).maxCoeff(&sub);
  sub += 50 - 30;
  EXPECT_NEAR(axis_value(tg, sub), 60.0, 2.0);
  EXPECT_GT(m(sub), 0.5 * m(arg));
}

TEST(AutocorrTempogram, MatchesDirectAutocorrelationAtIntegerLags) {
  oracle::Lcg rng(9);
  NoveltyCurve nov{std::vector<double>(500), 40.0};
  for (double& v : nov.values) v = rng.uniform();
  const Tempogram tg = autocorr_tempogram(nov);
  // 12.5 s of novelty, 8 s window, 1 s hop: frames 0..4.
  ASSERT_EQ(tg.magnitudes.rows(), 5);
  for (double bpm : {40.0, 60.0, 100.0, 120.0, 240.0}) {
    const int lag = static_cast<int>(60.0 * 40.0 / bpm);
    for (int frame : {0, 4}) {
      double r = 0, e = 0;
      for (int i = 0; i < 320; ++i) {
        const double a = nov.values[static_cast<std::size_t>(frame * 40 + i)];
        e += a * a;
        if (i + lag < 320) r += a * nov.values[static_cast<std::size_t>(frame * 40 + i + lag)];
      }
      EXPECT_NEAR(tg.magnitudes(frame, static_cast<Eigen::Index>(bpm - 30)), r / e, 1e-9) << bpm;
    }
  }
}

TEST(AutocorrTempogram, PeriodicNoveltyPeaksAtPeriod) {
  // Period 20 frames at 40 frames/s is exactly 120 BPM.
  const Tempogram tg = autocorr_tempogram(impulse_train(600, 20, 40.0));
  const auto m = time_mean(tg.magnitudes);
  EXPECT_NEAR(m(120 - 30), m.maxCoeff(), 1e-12);
}

TEST(CyclicTempogram, OctaveInvariance) {
  auto cyclic_arg = [](double bpm) {
    const Tempogram tg = fourier_tempogram(novelty_curve(stft(synth_click_track(bpm, 10))));
    return time_averaged_argmax(cyclic_tempogram(tg).magnitudes);
  };
  EXPECT_LE(std::abs(cyclic_arg(60) - cyclic_arg(120)), 1);
  EXPECT_LE(std::abs(cyclic_arg(87) - cyclic_arg(174)), 1);
}

TEST(CyclicTempogram, SingleBinAtReference) {
  Tempogram tg = flat_tempogram(0.0);
  tg.magnitudes.col(60 - 30).setConstant(1.0);
  const CyclicTempogram ct = cyclic_tempogram(tg);
  ASSERT_EQ(ct.scale_axis.size(), 15u);
  EXPECT_DOUBLE_EQ(ct.scale_axis.front(), 1.0);
  EXPECT_LT(ct.scale_axis.back(), 2.0);
  EXPECT_EQ(time_averaged_argmax(ct.magnitudes), 0);
  EXPECT_DOUBLE_EQ(ct.magnitudes(0, 0), 1.0);
}

TEST(CyclicTempogram, UniformInputNearUniformOutput) {
  const CyclicTempogram ct = cyclic_tempogram(flat_tempogram(1.0));
  // Each scale sums one value per octave landing on [30, 480]: 4 or 5 octaves.
  for (Eigen::Index j = 0; j < ct.magnitudes.cols(); ++j) {
    const double v = ct.magnitudes(0, j);
    double count = 0;
    for (int k = -3; k <= 4; ++k) {
      const double bpm = ct.scale_axis[static_cast<std::size_t>(j)] * 60.0 * std::pow(2.0, k);
      if (bpm >= 30.0 && bpm <= 480.0) count += 1;
    }
    EXPECT_NEAR(v, count, 1e-9);
    EXPECT_GE(v, 4.0);
    EXPECT_LE(v, 5.0);
  }
}

// Property: cyclic pooling is linear in nonnegative scalings.
TEST(CyclicTempogram, Linearity) {
  oracle::Lcg rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    Tempogram tg = flat_tempogram(0.0);
    for (Eigen::Index i = 0; i < tg.magnitudes.size(); ++i) tg.magnitudes.data()[i] = rng.uniform();
    const double a = 3.0 * rng.uniform();
    Tempogram scaled = tg;
    scaled.magnitudes *= a;
    const Matrix lhs = cyclic_tempogram(scaled).magnitudes;
    const Matrix rhs = a * cyclic_tempogram(tg).magnitudes;
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Summary, ClickTrackRankOne) {
  const Tempogram tg = fourier_tempogram(novelty_curve(stft(synth_click_track(128, 10))));
  const FeatureVector s = tempogram_summary(tg, 4);
  ASSERT_EQ(s.size(), 16u);
  EXPECT_NEAR(s.at("tg_fourier_top1_bpm"), 128.0, 1.0);
  EXPECT_DOUBLE_EQ(s.at("tg_fourier_top1_rel"), 1.0);
  for (int r = 1; r < 4; ++r) {
    EXPECT_GE(s.at("tg_fourier_top" + std::to_string(r) + "_mean"), s.at("tg_fourier_top" + std::to_string(r + 1) + "_mean"));
  }
}

TEST(Summary, ZeroAndStationaryInputs) {
  for (double v : tempogram_summary(flat_tempogram(0.0), 4).values) EXPECT_EQ(v, 0.0);
  Tempogram tg = flat_tempogram(0.0);
  for (Eigen::Index j = 0; j < tg.magnitudes.cols(); ++j) tg.magnitudes.col(j).setConstant(std::sin(0.1 * j) + 1.0);
  const FeatureVector s = tempogram_summary(tg, 4);
  for (int r = 1; r <= 4; ++r) EXPECT_EQ(s.at("tg_fourier_top" + std::to_string(r) + "_std"), 0.0);
  EXPECT_THROW(tempogram_summary(tg, 1000), std::invalid_argument);
}

TEST(FeatureVector, SixtyFourNamedFiniteValues) {
  const AudioClip c = synth_click_track(140, 10);
  const FeatureVector v = tempogram_feature_vector(c);
  ASSERT_EQ(v.size(), kTempogramFeatureCount);
  EXPECT_EQ(std::set<std::string>(v.names.begin(), v.names.end()).size(), 64u);
  for (double x : v.values) EXPECT_TRUE(std::isfinite(x));
  for (auto g : v.groups) EXPECT_EQ(g, FeatureGroup::tempogram);
  EXPECT_EQ(v.values, tempogram_feature_vector(c).values);

  const double f = v.at("tg_fourier_top1_bpm"), a = v.at("tg_autocorr_top1_bpm");
  const double ratio = std::log2(f / a);
  EXPECT_NEAR(ratio, std::round(ratio), 0.02);
}

TEST(FeatureVector, RejectsShortClip) { EXPECT_THROW(tempogram_feature_vector(synth_click_track(120, 9)), std::invalid_argument); }
