#ifndef EDM_ATLAS_DSP_FEATURES_HPP
#define EDM_ATLAS_DSP_FEATURES_HPP

// Fundamental per-track descriptors: spectral statistics, MFCCs with deltas,
// chroma, tempo estimates, DFA danceability, and per-band beat emphasis.
//
// Schema (92 fundamental values, fixed order):
//   spectral  10  centroid, spread, entropy, flux, rolloff  x {mean, std}
//   timbral   52  mfcc0-12 and delta0-12 x {mean, std}
//   harmonic  26  12 chroma means, 12 chroma stds, entropy mean, dominant-class std
//   rhythmic   4  fourier/autocorr/geometric-mean tempo, DFA exponent
// The full extracted row adds the 64 tempogram values and 6 band emphases.

#include "edm_atlas/audio_io.hpp"
#include "edm_atlas/common.hpp"
#include "edm_atlas/tempogram.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace edm_atlas {

inline constexpr std::size_t kFundamentalFeatureCount = 92;
inline constexpr std::size_t kBandEmphasisCount = 6;
inline constexpr std::size_t kExtractedFeatureCount = kFundamentalFeatureCount + kTempogramFeatureCount + kBandEmphasisCount;

inline constexpr double kRolloffFraction = 0.85;
inline constexpr int kMelBands = 40;
inline constexpr int kMfccCount = 13;
inline constexpr double kLogFloor = 1e-10;

/// Lower band edges in Hz; each band spans one octave.
inline constexpr std::array<double, 6> kEmphasisBandEdges = {60.0, 120.0, 240.0, 480.0, 960.0, 1920.0};

/// Mean per-bin, per-frame band flux below which a band counts as onset-free.
inline constexpr double kSilentBandFlux = 1e-2;

namespace detail {

inline void push_mean_std(FeatureVector& fv, const std::string& name, std::span<const double> series, FeatureGroup group) {
  fv.push(name + "_mean", mean_of(series), group);
  fv.push(name + "_std", std_of(series), group);
}

template <typename F>
auto with_context(const char* group, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string(group) + " features: " + e.what());
  }
}

}  // namespace detail

/// Centroid, spread, entropy (nats), flux and 85% rolloff, each as mean and
/// std over frames. Silent frames contribute zeros.
inline FeatureVector spectral_stats(const Spectrogram& spec) {
  if (spec.frames() < 2) throw std::invalid_argument("spectral_stats: need at least 2 frames");
  const Eigen::Index frames = spec.frames();
  const Eigen::Map<const Eigen::RowVectorXd> freqs(spec.bin_freqs.data(), spec.bins());
  std::vector<double> centroid, spread, entropy, flux, rolloff;
  for (Eigen::Index t = 0; t < frames; ++t) {
    const auto row = spec.magnitudes.row(t);
    const double total = row.sum();
    if (total <= 0.0) {
      centroid.push_back(0.0);
      spread.push_back(0.0);
      entropy.push_back(0.0);
      rolloff.push_back(0.0);
    } else {
      const double c = row.dot(freqs) / total;
      centroid.push_back(c);
      spread.push_back(std::sqrt((row.array() * (freqs.array() - c).square()).sum() / total));
      double h = 0.0;
      for (Eigen::Index k = 0; k < row.size(); ++k) {
        const double p = row(k) / total;
        if (p > 0.0) h -= p * std::log(p);
      }
      entropy.push_back(h);
      const double energy = row.squaredNorm();
      double cum = 0.0;
      double roll = spec.bin_freqs.back();
      for (Eigen::Index k = 0; k < row.size(); ++k) {
        cum += row(k) * row(k);
        if (cum >= kRolloffFraction * energy) {
          roll = spec.bin_freqs[static_cast<std::size_t>(k)];
          break;
        }
      }
      rolloff.push_back(roll);
    }
    if (t > 0) flux.push_back((row - spec.magnitudes.row(t - 1)).cwiseMax(0.0).norm());
  }
  FeatureVector fv;
  detail::push_mean_std(fv, "spectral_centroid", centroid, FeatureGroup::spectral);
  detail::push_mean_std(fv, "spectral_spread", spread, FeatureGroup::spectral);
  detail::push_mean_std(fv, "spectral_entropy", entropy, FeatureGroup::spectral);
  detail::push_mean_std(fv, "spectral_flux", flux, FeatureGroup::spectral);
  detail::push_mean_std(fv, "spectral_rolloff", rolloff, FeatureGroup::spectral);
  return fv;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular mel filterbank (bands x bins) with unit peaks, spanning 0 Hz to
/// min(f_max, Nyquist).
inline Matrix mel_filterbank(const std::vector<double>& bin_freqs, int bands, double f_max) {
  const double top = std::min(f_max, bin_freqs.back());
  const double mel_top = hz_to_mel(top);
  std::vector<double> edges(static_cast<std::size_t>(bands + 2));
  for (int i = 0; i < bands + 2; ++i) edges[static_cast<std::size_t>(i)] = mel_to_hz(mel_top * i / (bands + 1));
  Matrix fb = Matrix::Zero(bands, static_cast<Eigen::Index>(bin_freqs.size()));
  for (int b = 0; b < bands; ++b) {
    const double lo = edges[static_cast<std::size_t>(b)];
    const double mid = edges[static_cast<std::size_t>(b + 1)];
    const double hi = edges[static_cast<std::size_t>(b + 2)];
    for (std::size_t k = 0; k < bin_freqs.size(); ++k) {
      const double f = bin_freqs[k];
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      fb(b, static_cast<Eigen::Index>(k)) = w;
    }
  }
  return fb;
}

/// Orthonormal DCT-II basis, rows = output coefficients.
inline Matrix dct2_basis(int n_out, int n_in) {
  Matrix basis(n_out, n_in);
  for (int k = 0; k < n_out; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n_in) : std::sqrt(2.0 / n_in);
    for (int n = 0; n < n_in; ++n) basis(k, n) = scale * std::cos(M_PI * k * (2.0 * n + 1.0) / (2.0 * n_in));
  }
  return basis;
}

/// Frames x 13 MFCC matrix from log mel power (floor 1e-10).
inline Matrix mfcc_matrix(const Spectrogram& spec) {
  const Matrix fb = mel_filterbank(spec.bin_freqs, kMelBands, 11025.0);
  const Matrix dct = dct2_basis(kMfccCount, kMelBands);
  const Matrix mel = spec.magnitudes.array().square().matrix() * fb.transpose();
  const Matrix logmel = mel.array().max(kLogFloor).log().matrix();
  return logmel * dct.transpose();
}

/// Mean and std of 13 MFCCs and of their centered first differences.
inline FeatureVector mfcc_features(const Spectrogram& spec) {
  if (spec.frames() < 3) throw std::invalid_argument("mfcc_features: need at least 3 frames");
  const Matrix c = mfcc_matrix(spec);
  const Eigen::Index frames = c.rows();
  const Matrix delta = (c.bottomRows(frames - 2) - c.topRows(frames - 2)) * 0.5;
  FeatureVector fv;
  for (int i = 0; i < kMfccCount; ++i) {
    const Eigen::VectorXd col = c.col(i);
    detail::push_mean_std(fv, "mfcc" + std::to_string(i), std::span<const double>(col.data(), static_cast<std::size_t>(col.size())),
                          FeatureGroup::timbral);
  }
  for (int i = 0; i < kMfccCount; ++i) {
    const Eigen::VectorXd col = delta.col(i);
    detail::push_mean_std(fv, "mfcc_delta" + std::to_string(i),
                          std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), FeatureGroup::timbral);
  }
  return fv;
}

inline constexpr std::array<const char*, 12> kPitchClassNames = {"C", "Cs", "D", "Ds", "E", "F", "Fs", "G", "Gs", "A", "As", "B"};

/// Pitch class (C = 0, A = 9) of a frequency, A440 reference.
inline int pitch_class(double hz) {
  const long semis = std::lround(12.0 * std::log2(hz / 440.0));
  return static_cast<int>(((semis + 9) % 12 + 12) % 12);
}

/// Frames x 12 chroma, energy folded by pitch class (bins below 55 Hz ignored),
/// each frame L1-normalized; silent frames become uniform.
inline Matrix chroma_matrix(const Spectrogram& spec) {
  std::vector<int> pc(spec.bin_freqs.size(), -1);
  for (std::size_t k = 0; k < spec.bin_freqs.size(); ++k) {
    if (spec.bin_freqs[k] >= 55.0) pc[k] = pitch_class(spec.bin_freqs[k]);
  }
  Matrix chroma = Matrix::Zero(spec.frames(), 12);
  for (Eigen::Index t = 0; t < spec.frames(); ++t) {
    for (Eigen::Index k = 0; k < spec.bins(); ++k) {
      const int c = pc[static_cast<std::size_t>(k)];
      if (c >= 0) chroma(t, c) += spec.magnitudes(t, k) * spec.magnitudes(t, k);
    }
    const double total = chroma.row(t).sum();
    if (total > 0.0) chroma.row(t) /= total;
    else chroma.row(t).setConstant(1.0 / 12.0);
  }
  return chroma;
}

inline FeatureVector chroma_features(const Spectrogram& spec) {
  if (spec.frames() < 1) throw std::invalid_argument("chroma_features: need at least 1 frame");
  const Matrix chroma = chroma_matrix(spec);
  FeatureVector fv;
  for (int c = 0; c < 12; ++c) fv.push(std::string("chroma_") + kPitchClassNames[static_cast<std::size_t>(c)] + "_mean", chroma.col(c).mean(), FeatureGroup::harmonic);
  for (int c = 0; c < 12; ++c) {
    const Eigen::VectorXd col = chroma.col(c);
    fv.push(std::string("chroma_") + kPitchClassNames[static_cast<std::size_t>(c)] + "_std",
            std_of(std::span<const double>(col.data(), static_cast<std::size_t>(col.size()))), FeatureGroup::harmonic);
  }
  std::vector<double> entropy, dominant;
  for (Eigen::Index t = 0; t < chroma.rows(); ++t) {
    double h = 0.0;
    for (int c = 0; c < 12; ++c) {
      const double p = chroma(t, c);
      if (p > 0.0) h -= p * std::log(p);
    }
    entropy.push_back(h);
    Eigen::Index arg = 0;
    chroma.row(t).maxCoeff(&arg);
    dominant.push_back(static_cast<double>(arg));
  }
  fv.push("chroma_entropy_mean", mean_of(entropy), FeatureGroup::harmonic);
  fv.push("chroma_dominant_std", std_of(dominant), FeatureGroup::harmonic);
  return fv;
}

/// Three tempo estimates in BPM: Fourier-tempogram argmax, autocorrelation
/// argmax, and their geometric mean. A tempogram with no energy yields 0.
inline FeatureVector tempo_estimates(const TempoAnalysis& analysis) {
  auto estimate = [](const Tempogram& tg) {
    const Eigen::RowVectorXd avg = tg.magnitudes.colwise().mean();
    if (avg.size() == 0 || avg.maxCoeff() <= 0.0) return 0.0;
    return tg.tempo_axis[static_cast<std::size_t>(time_averaged_argmax(tg.magnitudes))];
  };
  const double fourier = estimate(analysis.fourier);
  const double autocorr = estimate(analysis.autocorr);
  if (fourier == 0.0 || autocorr == 0.0) spdlog::warn("tempo_estimates: no periodic onset energy, reporting 0 BPM");
  FeatureVector fv;
  fv.push("tempo_fourier_bpm", fourier, FeatureGroup::rhythmic);
  fv.push("tempo_autocorr_bpm", autocorr, FeatureGroup::rhythmic);
  fv.push("tempo_geomean_bpm", std::sqrt(fourier * autocorr), FeatureGroup::rhythmic);
  return fv;
}

inline FeatureVector tempo_estimates(const AudioClip& clip) {
  if (clip.duration() < 5.0) throw std::invalid_argument("tempo_estimates: clip shorter than 5 s");
  return tempo_estimates(analyze_tempo(stft(clip)));
}

/// Integer window sizes, log-spaced between lo and hi, deduplicated.
inline std::vector<std::size_t> log_spaced_sizes(std::size_t lo, std::size_t hi, std::size_t count) {
  std::vector<std::size_t> sizes;
  for (std::size_t i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    const auto s = static_cast<std::size_t>(std::lround(std::exp(std::log(static_cast<double>(lo)) * (1.0 - f) +
                                                                 std::log(static_cast<double>(hi)) * f)));
    if (sizes.empty() || sizes.back() != s) sizes.push_back(s);
  }
  return sizes;
}

/// Root-mean-square residual of the integrated, mean-removed series after a
/// least-squares line is removed from each non-overlapping window of `size`.
inline double dfa_fluctuation(std::span<const double> profile, std::size_t size) {
  const std::size_t windows = profile.size() / size;
  if (windows == 0 || size < 3) return 0.0;
  const double n = static_cast<double>(size);
  const double t_mean = (n - 1.0) / 2.0;
  double t_var = 0.0;
  for (std::size_t i = 0; i < size; ++i) t_var += (static_cast<double>(i) - t_mean) * (static_cast<double>(i) - t_mean);
  double acc = 0.0;
  for (std::size_t w = 0; w < windows; ++w) {
    const double* y = profile.data() + w * size;
    double y_mean = 0.0;
    for (std::size_t i = 0; i < size; ++i) y_mean += y[i];
    y_mean /= n;
    double cov = 0.0;
    for (std::size_t i = 0; i < size; ++i) cov += (static_cast<double>(i) - t_mean) * (y[i] - y_mean);
    const double slope = cov / t_var;
    for (std::size_t i = 0; i < size; ++i) {
      const double r = y[i] - (y_mean + slope * (static_cast<double>(i) - t_mean));
      acc += r * r;
    }
  }
  return std::sqrt(acc / static_cast<double>(windows * size));
}

/// DFA scaling exponent: slope of log F(s) against log s. Returns 0 when the
/// series has no fluctuation at some scale.
inline double dfa_exponent(std::span<const double> series, std::size_t min_window, std::size_t max_window, std::size_t n_sizes = 12) {
  if (min_window < 3 || max_window <= min_window) throw std::invalid_argument("dfa_exponent: invalid window range");
  if (series.size() < max_window) throw std::invalid_argument("dfa_exponent: series shorter than the largest window");
  const double m = mean_of(series);
  std::vector<double> profile(series.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    acc += series[i] - m;
    profile[i] = acc;
  }
  const auto sizes = log_spaced_sizes(min_window, max_window, n_sizes);
  std::vector<double> lx, ly;
  for (std::size_t s : sizes) {
    const double f = dfa_fluctuation(profile, s);
    if (!(f > 1e-300)) return 0.0;
    lx.push_back(std::log(static_cast<double>(s)));
    ly.push_back(std::log(f));
  }
  const double mx = mean_of(lx), my = mean_of(ly);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

/// DFA exponent of the onset-strength envelope over windows of 0.1 s to 5 s.
inline double danceability_dfa(const Spectrogram& spec) {
  const auto env = onset_strength(spec);
  const auto lo = static_cast<std::size_t>(std::max(3L, std::lround(0.1 * spec.frame_rate)));
  const auto hi = static_cast<std::size_t>(std::lround(5.0 * spec.frame_rate));
  return dfa_exponent(env, lo, hi, 12);
}

inline double danceability_dfa(const AudioClip& clip) {
  if (clip.duration() < 10.0) throw std::invalid_argument("danceability_dfa: clip shorter than 10 s");
  return danceability_dfa(stft(clip));
}

/// Beat emphasis of one octave band: peak of the novelty autocorrelation over
/// lags of 0.125 s to 2 s, divided by the squared novelty mean (the level an
/// unstructured novelty would reach). Onset-free bands report 0.
inline double band_emphasis(const Spectrogram& spec, double f_lo, double f_hi) {
  const auto flux = onset_strength(spec, f_lo, f_hi);
  std::size_t band_bins = 0;
  for (double f : spec.bin_freqs) band_bins += (f >= f_lo && f < f_hi) ? 1 : 0;
  if (band_bins == 0 || mean_of(flux) / static_cast<double>(band_bins) < kSilentBandFlux) return 0.0;

  const auto nov = subtract_local_mean(flux, spec.frame_rate);
  const double mu = mean_of(nov);
  if (mu <= 0.0) return 0.0;
  const auto lag_lo = static_cast<std::size_t>(std::max(1L, std::lround(0.125 * spec.frame_rate)));
  const auto lag_hi = static_cast<std::size_t>(std::lround(2.0 * spec.frame_rate));
  double peak = 0.0;
  for (std::size_t lag = lag_lo; lag <= lag_hi && lag < nov.size(); ++lag) {
    double acc = 0.0;
    for (std::size_t i = 0; i + lag < nov.size(); ++i) acc += nov[i] * nov[i + lag];
    peak = std::max(peak, acc / static_cast<double>(nov.size() - lag));
  }
  return peak / (mu * mu);
}

inline FeatureVector band_beat_emphasis(const Spectrogram& spec) {
  FeatureVector fv;
  for (std::size_t b = 0; b < kEmphasisBandEdges.size(); ++b) {
    fv.push("beat_emphasis_band" + std::to_string(b + 1), band_emphasis(spec, kEmphasisBandEdges[b], 2.0 * kEmphasisBandEdges[b]),
            FeatureGroup::rhythmic);
  }
  return fv;
}

inline FeatureVector band_beat_emphasis(const AudioClip& clip) {
  if (clip.duration() < 5.0) throw std::invalid_argument("band_beat_emphasis: clip shorter than 5 s");
  return band_beat_emphasis(stft(clip));
}

namespace detail {

inline void require_canonical(const AudioClip& clip) {
  if (clip.sample_rate != kAnalysisRate) {
    throw std::invalid_argument("clip must be at " + std::to_string(kAnalysisRate) + " Hz, got " + std::to_string(clip.sample_rate));
  }
  if (clip.duration() < 10.0) throw std::invalid_argument("clip shorter than 10 s");
}

inline FeatureVector fundamental_from(const Spectrogram& spec, const TempoAnalysis& tempo) {
  FeatureVector fv;
  fv.append(with_context("spectral", [&] { return spectral_stats(spec); }));
  fv.append(with_context("timbral", [&] { return mfcc_features(spec); }));
  fv.append(with_context("harmonic", [&] { return chroma_features(spec); }));
  fv.append(with_context("rhythmic", [&] { return tempo_estimates(tempo); }));
  fv.push("danceability_dfa", with_context("rhythmic", [&] { return danceability_dfa(spec); }), FeatureGroup::rhythmic);
  return fv;
}

}  // namespace detail

/// The 92-dim fundamental vector of a canonical-rate clip of at least 10 s.
inline FeatureVector fundamental_feature_vector(const AudioClip& clip) {
  detail::require_canonical(clip);
  const Spectrogram spec = stft(clip);
  const TempoAnalysis tempo = detail::with_context("tempogram", [&] { return analyze_tempo(spec); });
  return detail::fundamental_from(spec, tempo);
}

/// Full extracted row: fundamental (92) + tempogram (64) + band emphasis (6).
/// The STFT and tempograms are computed once and shared.
inline FeatureVector extract_track_features(const AudioClip& clip) {
  detail::require_canonical(clip);
  const Spectrogram spec = stft(clip);
  const TempoAnalysis tempo = detail::with_context("tempogram", [&] { return analyze_tempo(spec); });
  FeatureVector fv = detail::fundamental_from(spec, tempo);
  fv.append(detail::with_context("tempogram", [&] { return tempogram_feature_vector(tempo); }));
  fv.append(detail::with_context("rhythmic", [&] { return band_beat_emphasis(spec); }));
  return fv;
}

}  // namespace edm_atlas

#endif  // EDM_ATLAS_DSP_FEATURES_HPP
