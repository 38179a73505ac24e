#include "edm_atlas/dsp_features.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace edm_atlas;

namespace {

Spectrogram tone_spec(int frames, int bins, double df, int hot_bin) {
  Spectrogram s;
  s.magnitudes = Matrix::Zero(frames, bins);
  for (int b = 0; b < bins; ++b) s.bin_freqs.push_back(df * b);
  for (int t = 0; t < frames; ++t) s.magnitudes(t, hot_bin) = 1.0;
  s.frame_rate = 43.0;
  return s;
}

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  oracle::Lcg rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  return x;
}

}  // namespace

TEST(SpectralStats, SingleBinTone) {
  const FeatureVector fv = spectral_stats(tone_spec(5, 100, 10.0, 44));
  ASSERT_EQ(fv.size(), 10u);
  EXPECT_DOUBLE_EQ(fv.at("spectral_centroid_mean"), 440.0);
  EXPECT_DOUBLE_EQ(fv.at("spectral_spread_mean"), 0.0);
  EXPECT_DOUBLE_EQ(fv.at("spectral_entropy_mean"), 0.0);
  EXPECT_DOUBLE_EQ(fv.at("spectral_flux_mean"), 0.0);
  EXPECT_DOUBLE_EQ(fv.at("spectral_rolloff_mean"), 440.0);
  EXPECT_DOUBLE_EQ(fv.at("spectral_centroid_std"), 0.0);
}

TEST(SpectralStats, FlatSpectrumEntropy) {
  Spectrogram s = tone_spec(4, 64, 5.0, 0);
  s.magnitudes.setConstant(0.3);
  const FeatureVector fv = spectral_stats(s);
  EXPECT_NEAR(fv.at("spectral_entropy_mean"), std::log(64.0), 1e-12);
  EXPECT_NEAR(fv.at("spectral_centroid_mean"), 5.0 * 63 / 2, 1e-9);
}

TEST(SpectralStats, WhiteNoiseRolloffMatchesDirectSum) {
  const Spectrogram s = stft(synth_white_noise(2.0, 11));
  double expected = 0;
  for (Eigen::Index t = 0; t < s.frames(); ++t) {
    double total = 0;
    for (Eigen::Index k = 0; k < s.bins(); ++k) total += s.magnitudes(t, k) * s.magnitudes(t, k);
    double cum = 0;
    for (Eigen::Index k = 0; k < s.bins(); ++k) {
      cum += s.magnitudes(t, k) * s.magnitudes(t, k);
      if (cum >= 0.85 * total) {
        expected += s.bin_freqs[static_cast<std::size_t>(k)];
        break;
      }
    }
  }
  expected /= static_cast<double>(s.frames());
  const double got = spectral_stats(s).at("spectral_rolloff_mean");
  EXPECT_NEAR(got, expected, 1e-9);
  // flat spectrum: 85% of the energy sits below about 0.85 of Nyquist
  EXPECT_NEAR(got / 11025.0, 0.85, 0.03);
}

TEST(SpectralStats, NeedsTwoFrames) { EXPECT_THROW(spectral_stats(tone_spec(1, 10, 1.0, 2)), std::invalid_argument); }

TEST(Mfcc, SchemaAndFiniteOnSilence) {
  AudioClip silent;
  silent.samples.assign(22050, 0.0);
  const FeatureVector fv = mfcc_features(stft(silent));
  ASSERT_EQ(fv.size(), 52u);
  EXPECT_EQ(fv.names[0], "mfcc0_mean");
  EXPECT_EQ(fv.names[26], "mfcc_delta0_mean");
  for (double v : fv.values) EXPECT_TRUE(std::isfinite(v));
  for (auto g : fv.groups) EXPECT_EQ(g, FeatureGroup::timbral);
}

TEST(Mfcc, LouderRaisesOnlyZerothCoefficient) {
  const AudioClip a = synth_white_noise(1.0, 4, 22050, 0.1);
  AudioClip b = a;
  for (auto& v : b.samples) v *= 4.0;
  const FeatureVector fa = mfcc_features(stft(a)), fb = mfcc_features(stft(b));
  EXPECT_GT(fb.at("mfcc0_mean"), fa.at("mfcc0_mean"));
  for (int i = 1; i < 13; ++i) {
    const std::string n = "mfcc" + std::to_string(i) + "_mean";
    EXPECT_NEAR(fa.at(n), fb.at(n), 1e-6) << n;
  }
}

TEST(Chroma, PureTonesLandOnTheirPitchClass) {
  const FeatureVector a = chroma_features(stft(synth_sine(440.0, 1.0)));
  const FeatureVector c = chroma_features(stft(synth_sine(261.63, 1.0)));
  ASSERT_EQ(a.size(), 26u);
  for (const char* pc : kPitchClassNames) {
    if (std::string(pc) != "A") EXPECT_GT(a.at("chroma_A_mean"), a.at(std::string("chroma_") + pc + "_mean"));
    if (std::string(pc) != "C") EXPECT_GT(c.at("chroma_C_mean"), c.at(std::string("chroma_") + pc + "_mean"));
  }
  EXPECT_GT(a.at("chroma_A_mean"), 0.5);
  EXPECT_EQ(pitch_class(440.0), 9);
  EXPECT_EQ(pitch_class(880.0), 9);
  EXPECT_EQ(pitch_class(261.63), 0);
}

TEST(Chroma, SilenceIsUniform) {
  AudioClip silent;
  silent.samples.assign(8192, 0.0);
  const FeatureVector fv = chroma_features(stft(silent));
  EXPECT_NEAR(fv.at("chroma_G_mean"), 1.0 / 12, 1e-12);
  EXPECT_NEAR(fv.at("chroma_entropy_mean"), std::log(12.0), 1e-12);
}

TEST(TempoEstimates, ClickTrack) {
  const FeatureVector fv = tempo_estimates(synth_click_track(128, 12.0));
  ASSERT_EQ(fv.size(), 3u);
  EXPECT_NEAR(fv.at("tempo_fourier_bpm"), 128, 2.0);
  EXPECT_NEAR(fv.at("tempo_geomean_bpm"), std::sqrt(fv.at("tempo_fourier_bpm") * fv.at("tempo_autocorr_bpm")), 1e-9);
  EXPECT_THROW(tempo_estimates(synth_click_track(128, 4.0)), std::invalid_argument);
}

TEST(Dfa, LogSpacedSizes) {
  const auto s = log_spaced_sizes(10, 1000, 12);
  EXPECT_EQ(s.front(), 10u);
  EXPECT_EQ(s.back(), 1000u);
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_GT(s[i], s[i - 1]);
  EXPECT_EQ(log_spaced_sizes(5, 6, 12).size(), 2u);
}

// Property: the exponent agrees with an explicit least-squares oracle on
// several random series.
TEST(Dfa, MatchesOracle) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto x = gaussian(3000 + 100 * seed, seed);
    const auto sizes = log_spaced_sizes(8, 600, 12);
    EXPECT_NEAR(dfa_exponent(x, 8, 600), oracle::dfa(x, sizes), 1e-9) << "seed " << seed;
  }
}

TEST(Dfa, WhiteNoiseNearHalfAndBrownianNearOneAndHalf) {
  const auto x = gaussian(20000, 42);
  EXPECT_NEAR(dfa_exponent(x, 10, 1000), 0.5, 0.1);
  std::vector<double> walk(x.size());
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) walk[i] = acc += x[i];
  EXPECT_NEAR(dfa_exponent(walk, 10, 1000), 1.5, 0.1);
}

TEST(Dfa, ConstantSeriesGivesZero) {
  const std::vector<double> c(500, 3.0);
  EXPECT_EQ(dfa_exponent(c, 4, 100), 0.0);
}

TEST(Dfa, Preconditions) {
  const auto x = gaussian(100, 1);
  EXPECT_THROW(dfa_exponent(x, 2, 50), std::invalid_argument);
  EXPECT_THROW(dfa_exponent(x, 10, 10), std::invalid_argument);
  EXPECT_THROW(dfa_exponent(x, 10, 200), std::invalid_argument);
}

TEST(Dfa, SteadyClicksScoreBelowNoise) {
  const double clicks = danceability_dfa(synth_click_track(124, 20.0));
  const double noise = danceability_dfa(synth_white_noise(20.0, 9));
  EXPECT_LT(clicks, noise);
}

TEST(BandEmphasis, ClicksBeatNoiseAndSilenceIsZero) {
  const FeatureVector clicks = band_beat_emphasis(synth_click_track(128, 10.0));
  const FeatureVector noise = band_beat_emphasis(synth_white_noise(10.0, 5));
  ASSERT_EQ(clicks.size(), 6u);
  for (std::size_t b = 0; b < 6; ++b) EXPECT_GT(clicks.values[b], noise.values[b]) << clicks.names[b];

  AudioClip silent;
  silent.samples.assign(22050 * 6, 0.0);
  for (double v : band_beat_emphasis(silent).values) EXPECT_EQ(v, 0.0);
}

TEST(Fundamental, SchemaAndDeterminism) {
  const AudioClip clip = synth_click_track(128, 10.0);
  const FeatureVector a = fundamental_feature_vector(clip);
  ASSERT_EQ(a.size(), kFundamentalFeatureCount);
  std::set<std::string> unique(a.names.begin(), a.names.end());
  EXPECT_EQ(unique.size(), a.size());
  for (double v : a.values) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(fundamental_feature_vector(clip).values, a.values);

  const FeatureVector full = extract_track_features(clip);
  ASSERT_EQ(full.size(), kExtractedFeatureCount);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(full.values[i], a.values[i]);
}

TEST(Fundamental, RejectsWrongRateAndShortClips) {
  EXPECT_THROW(fundamental_feature_vector(synth_click_track(128, 10.0, 44100)), std::invalid_argument);
  EXPECT_THROW(fundamental_feature_vector(synth_click_track(128, 5.0)), std::invalid_argument);
}

TEST(Fundamental, ScaleInvariantSpectralShape) {
  const AudioClip a = synth_white_noise(10.0, 21, 22050, 0.2);
  AudioClip b = a;
  for (auto& v : b.samples) v *= 0.5;
  const FeatureVector fa = fundamental_feature_vector(a), fb = fundamental_feature_vector(b);
  for (const char* n : {"spectral_centroid_mean", "spectral_spread_mean", "spectral_entropy_mean", "spectral_rolloff_mean",
                        "chroma_A_mean"}) {
    EXPECT_NEAR(fa.at(n), fb.at(n), 1e-6 * std::max(1.0, std::abs(fa.at(n)))) << n;
  }
}
