#ifndef EDM_ATLAS_TEMPOGRAM_HPP
#define EDM_ATLAS_TEMPOGRAM_HPP

// Onset novelty and tempo-domain representations: Fourier tempogram,
// autocorrelation tempogram, their octave-folded (cyclic) versions, and the
// top-bin summaries that make up the 64-dim tempogram feature block.

#include "edm_atlas/audio_io.hpp"
#include "edm_atlas/common.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>
#include <string>
#include <vector>

namespace edm_atlas {

inline constexpr double kTempoMin = 30.0;
inline constexpr double kTempoMax = 480.0;
inline constexpr double kTempoWindowSeconds = 8.0;
inline constexpr double kTempoHopSeconds = 1.0;
inline constexpr double kCyclicReferenceTempo = 60.0;
inline constexpr int kCyclicScales = 15;
inline constexpr int kSummaryTopBins = 4;
inline constexpr std::size_t kTempogramFeatureCount = 64;

/// Gain inside log(1 + gain * |X|).
inline constexpr double kLogCompression = 1000.0;

struct NoveltyCurve {
  std::vector<double> values;
  double frame_rate = 0.0;
};

enum class TempogramKind { fourier, autocorr };

inline constexpr std::string_view to_string(TempogramKind k) { return k == TempogramKind::fourier ? "fourier" : "autocorr"; }

/// time_frames x tempo_bins magnitudes over an ascending BPM axis.
struct Tempogram {
  Matrix magnitudes;
  std::vector<double> tempo_axis;
  TempogramKind kind = TempogramKind::fourier;
  double frame_rate = 0.0;
};

/// Octave-folded tempogram over scales s in [1, 2) relative to ref_tempo.
struct CyclicTempogram {
  Matrix magnitudes;
  std::vector<double> scale_axis;
  double ref_tempo = kCyclicReferenceTempo;
  TempogramKind kind = TempogramKind::fourier;
};

inline std::vector<double> default_tempo_axis() {
  std::vector<double> axis;
  for (double bpm = kTempoMin; bpm <= kTempoMax + 1e-9; bpm += 1.0) axis.push_back(bpm);
  return axis;
}

/// Half-wave-rectified log-compressed spectral flux, summed over bins whose
/// frequency lies in [f_lo, f_hi). The first frame has no predecessor and is 0.
inline std::vector<double> onset_strength(const Spectrogram& spec, double f_lo = 0.0,
                                          double f_hi = std::numeric_limits<double>::infinity()) {
  const Eigen::Index frames = spec.frames();
  std::vector<double> env(static_cast<std::size_t>(frames), 0.0);
  Eigen::Index k0 = 0, k1 = 0;
  for (Eigen::Index k = 0; k < spec.bins(); ++k) {
    if (spec.bin_freqs[static_cast<std::size_t>(k)] < f_lo) k0 = k + 1;
    if (spec.bin_freqs[static_cast<std::size_t>(k)] < f_hi) k1 = k + 1;
  }
  if (k1 <= k0) return env;
  Eigen::ArrayXd prev = (1.0 + kLogCompression * spec.magnitudes.row(0).segment(k0, k1 - k0).array()).log();
  for (Eigen::Index t = 1; t < frames; ++t) {
    Eigen::ArrayXd cur = (1.0 + kLogCompression * spec.magnitudes.row(t).segment(k0, k1 - k0).array()).log();
    env[static_cast<std::size_t>(t)] = (cur - prev).max(0.0).sum();
    prev = std::move(cur);
  }
  return env;
}

/// Subtract a centered moving average of about one second and rectify.
inline std::vector<double> subtract_local_mean(std::span<const double> x, double frame_rate) {
  const auto n = static_cast<long>(x.size());
  const long half = std::max(1L, std::lround(frame_rate) / 2);
  std::vector<double> prefix(x.size() + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(x.size());
  for (long i = 0; i < n; ++i) {
    const long lo = std::max(0L, i - half);
    const long hi = std::min(n, i + half + 1);
    const double local = (prefix[static_cast<std::size_t>(hi)] - prefix[static_cast<std::size_t>(lo)]) / static_cast<double>(hi - lo);
    out[static_cast<std::size_t>(i)] = std::max(0.0, x[static_cast<std::size_t>(i)] - local);
  }
  return out;
}

/// Novelty restricted to a frequency band.
inline NoveltyCurve novelty_curve(const Spectrogram& spec, double f_lo, double f_hi) {
  if (spec.frames() < 2) throw std::invalid_argument("novelty_curve: need at least 2 frames");
  const auto env = onset_strength(spec, f_lo, f_hi);
  return {subtract_local_mean(env, spec.frame_rate), spec.frame_rate};
}

inline NoveltyCurve novelty_curve(const Spectrogram& spec) {
  return novelty_curve(spec, 0.0, std::numeric_limits<double>::infinity());
}

namespace detail {

struct TempoFraming {
  long window = 0;
  long hop = 0;
  long frames = 0;
};

inline TempoFraming tempo_framing(const NoveltyCurve& nov) {
  if (nov.frame_rate <= 0.0) throw std::invalid_argument("tempogram: novelty frame rate must be positive");
  TempoFraming f;
  f.window = std::lround(kTempoWindowSeconds * nov.frame_rate);
  f.hop = std::max(1L, std::lround(kTempoHopSeconds * nov.frame_rate));
  const auto len = static_cast<long>(nov.values.size());
  if (len < f.window) {
    throw std::invalid_argument("tempogram: novelty curve shorter than the " + std::to_string(kTempoWindowSeconds) +
                                " s analysis window");
  }
  f.frames = 1 + (len - f.window) / f.hop;
  return f;
}

/// Autocorrelation of `segment` at fractional lags, evaluated by trigonometric
/// interpolation of the zero-padded power spectrum. Exact at integer lags.
class FractionalAutocorrelation {
 public:
  FractionalAutocorrelation(std::size_t segment_len, std::span<const double> lags) : lags_(lags.begin(), lags.end()) {
    fft_len_ = 1;
    while (fft_len_ < 2 * segment_len) fft_len_ <<= 1;
    const std::size_t half = fft_len_ / 2;
    basis_.resize(static_cast<Eigen::Index>(lags_.size()), static_cast<Eigen::Index>(half + 1));
    for (std::size_t i = 0; i < lags_.size(); ++i) {
      for (std::size_t k = 0; k <= half; ++k) {
        const double weight = (k == 0 || k == half) ? 1.0 : 2.0;
        basis_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
            weight * std::cos(2.0 * M_PI * static_cast<double>(k) * lags_[i] / static_cast<double>(fft_len_)) /
            static_cast<double>(fft_len_);
      }
    }
  }

  /// Returns the autocorrelation at each lag and writes the zero-lag energy.
  Eigen::VectorXd operator()(std::span<const double> segment, double* energy) {
    buffer_.assign(fft_len_, 0.0);
    std::copy(segment.begin(), segment.end(), buffer_.begin());
    fft_.fwd(spectrum_, buffer_);
    Eigen::VectorXd power(static_cast<Eigen::Index>(fft_len_ / 2 + 1));
    for (Eigen::Index k = 0; k < power.size(); ++k) power(k) = std::norm(spectrum_[static_cast<std::size_t>(k)]);
    if (energy != nullptr) {
      double e = 0.0;
      for (double v : segment) e += v * v;
      *energy = e;
    }
    return basis_ * power;
  }

 private:
  std::vector<double> lags_;
  std::size_t fft_len_ = 1;
  Matrix basis_;
  Eigen::FFT<double> fft_;
  std::vector<double> buffer_;
  std::vector<std::complex<double>> spectrum_;
};

}  // namespace detail

/// Magnitude of the Hann-windowed Fourier coefficient of the novelty curve at
/// tau/60 Hz for each tempo tau on a 1-BPM grid, normalized by the window sum.
inline Tempogram fourier_tempogram(const NoveltyCurve& nov) {
  const auto framing = detail::tempo_framing(nov);
  Tempogram tg;
  tg.kind = TempogramKind::fourier;
  tg.tempo_axis = default_tempo_axis();
  tg.frame_rate = nov.frame_rate / static_cast<double>(framing.hop);
  const auto n_tempi = static_cast<Eigen::Index>(tg.tempo_axis.size());
  const auto window = hann_window(static_cast<int>(framing.window));
  const double wsum = std::accumulate(window.begin(), window.end(), 0.0);

  // Windowed complex exponentials, one row per tempo.
  Matrix re(n_tempi, framing.window), im(n_tempi, framing.window);
  for (Eigen::Index j = 0; j < n_tempi; ++j) {
    const double omega = 2.0 * M_PI * tg.tempo_axis[static_cast<std::size_t>(j)] / 60.0 / nov.frame_rate;
    for (long n = 0; n < framing.window; ++n) {
      re(j, n) = window[static_cast<std::size_t>(n)] * std::cos(omega * static_cast<double>(n));
      im(j, n) = -window[static_cast<std::size_t>(n)] * std::sin(omega * static_cast<double>(n));
    }
  }

  tg.magnitudes.resize(framing.frames, n_tempi);
  for (long t = 0; t < framing.frames; ++t) {
    const Eigen::Map<const Eigen::VectorXd> seg(nov.values.data() + t * framing.hop, framing.window);
    const Eigen::VectorXd a = re * seg;
    const Eigen::VectorXd b = im * seg;
    tg.magnitudes.row(t) = ((a.array().square() + b.array().square()).sqrt() / wsum).transpose();
  }
  return tg;
}

/// Windowed autocorrelation normalized by the zero-lag energy, sampled at
/// lag = 60 * frame_rate / tau for each tempo on the 1-BPM grid.
inline Tempogram autocorr_tempogram(const NoveltyCurve& nov) {
  const auto framing = detail::tempo_framing(nov);
  Tempogram tg;
  tg.kind = TempogramKind::autocorr;
  tg.tempo_axis = default_tempo_axis();
  tg.frame_rate = nov.frame_rate / static_cast<double>(framing.hop);

  std::vector<double> lags;
  lags.reserve(tg.tempo_axis.size());
  for (double bpm : tg.tempo_axis) lags.push_back(60.0 * nov.frame_rate / bpm);
  detail::FractionalAutocorrelation acf(static_cast<std::size_t>(framing.window), lags);

  tg.magnitudes.resize(framing.frames, static_cast<Eigen::Index>(lags.size()));
  for (long t = 0; t < framing.frames; ++t) {
    const std::span<const double> seg(nov.values.data() + t * framing.hop, static_cast<std::size_t>(framing.window));
    double energy = 0.0;
    const Eigen::VectorXd r = acf(seg, &energy);
    if (energy <= 0.0) {
      tg.magnitudes.row(t).setZero();
    } else {
      tg.magnitudes.row(t) = (r.array() / energy).max(0.0).matrix().transpose();
    }
  }
  return tg;
}

namespace detail {

/// Linear interpolation of `row` over an ascending axis; nullopt outside it.
inline std::optional<double> interpolate_on_axis(const std::vector<double>& axis, const Eigen::Ref<const Eigen::RowVectorXd>& row,
                                                 double x) {
  if (axis.empty() || x < axis.front() - 1e-9 || x > axis.back() + 1e-9) return std::nullopt;
  const auto it = std::upper_bound(axis.begin(), axis.end(), x);
  if (it == axis.begin()) return row(0);
  if (it == axis.end()) return row(static_cast<Eigen::Index>(axis.size() - 1));
  const auto hi = static_cast<Eigen::Index>(it - axis.begin());
  const Eigen::Index lo = hi - 1;
  const double x0 = axis[static_cast<std::size_t>(lo)];
  const double x1 = axis[static_cast<std::size_t>(hi)];
  const double frac = (x - x0) / (x1 - x0);
  return row(lo) + frac * (row(hi) - row(lo));
}

}  // namespace detail

/// Pools tempogram energy over octave classes: bin s collects every tempo
/// s * ref_tempo * 2^k lying on the tempo axis. Out-of-range octaves are skipped.
inline CyclicTempogram cyclic_tempogram(const Tempogram& tg, double ref_tempo = kCyclicReferenceTempo,
                                        int n_scales = kCyclicScales) {
  if (ref_tempo < kTempoMin || ref_tempo > kTempoMax) throw std::invalid_argument("cyclic_tempogram: reference tempo outside [30, 480]");
  if (n_scales < 4) throw std::invalid_argument("cyclic_tempogram: need at least 4 scale bins");
  CyclicTempogram ct;
  ct.ref_tempo = ref_tempo;
  ct.kind = tg.kind;
  for (int j = 0; j < n_scales; ++j) ct.scale_axis.push_back(std::exp2(static_cast<double>(j) / n_scales));

  // Octave multipliers that can land on the axis for some scale in [1, 2).
  const double lo = tg.tempo_axis.empty() ? 1.0 : tg.tempo_axis.front();
  const double hi = tg.tempo_axis.empty() ? 1.0 : tg.tempo_axis.back();
  const int k_min = static_cast<int>(std::floor(std::log2(lo / (2.0 * ref_tempo)))) - 1;
  const int k_max = static_cast<int>(std::ceil(std::log2(hi / ref_tempo))) + 1;

  ct.magnitudes = Matrix::Zero(tg.magnitudes.rows(), n_scales);
  for (Eigen::Index t = 0; t < tg.magnitudes.rows(); ++t) {
    for (int j = 0; j < n_scales; ++j) {
      double acc = 0.0;
      for (int k = k_min; k <= k_max; ++k) {
        const double bpm = ct.scale_axis[static_cast<std::size_t>(j)] * ref_tempo * std::exp2(k);
        if (auto v = detail::interpolate_on_axis(tg.tempo_axis, tg.magnitudes.row(t), bpm)) acc += *v;
      }
      ct.magnitudes(t, j) = acc;
    }
  }
  return ct;
}

/// Time-averaged argmax bin of a frames x bins magnitude matrix (lowest index on ties).
inline Eigen::Index time_averaged_argmax(const Matrix& magnitudes) {
  const Eigen::RowVectorXd avg = magnitudes.colwise().mean();
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < avg.size(); ++j) {
    if (avg(j) > avg(best)) best = j;
  }
  return best;
}

/// Rank bins by time-mean magnitude and emit, for each of the top_n bins,
/// its axis value, time mean, temporal std and strength relative to rank 1.
/// Bins with zero mean report 0 for every value.
inline FeatureVector tempogram_summary(const Matrix& magnitudes, const std::vector<double>& axis, int top_n,
                                       const std::string& prefix, const std::string& axis_name) {
  if (top_n < 1) throw std::invalid_argument("tempogram_summary: top_n must be >= 1");
  if (static_cast<std::size_t>(top_n) > axis.size() || magnitudes.cols() != static_cast<Eigen::Index>(axis.size())) {
    throw std::invalid_argument("tempogram_summary: top_n exceeds the number of bins");
  }
  const Eigen::Index frames = magnitudes.rows();
  std::vector<double> mean(axis.size(), 0.0), sd(axis.size(), 0.0);
  for (Eigen::Index j = 0; j < magnitudes.cols(); ++j) {
    if (frames == 0) continue;
    const Eigen::VectorXd col = magnitudes.col(j);
    // A stationary bin must give exactly zero spread, not rounding noise.
    if (col.minCoeff() == col.maxCoeff()) {
      mean[static_cast<std::size_t>(j)] = col(0);
      continue;
    }
    mean[static_cast<std::size_t>(j)] = col.mean();
    sd[static_cast<std::size_t>(j)] = std::sqrt((col.array() - col.mean()).square().mean());
  }
  std::vector<std::size_t> order(axis.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mean[a] > mean[b]; });

  const double strongest = mean[order.front()];
  FeatureVector fv;
  for (int r = 0; r < top_n; ++r) {
    const std::size_t bin = order[static_cast<std::size_t>(r)];
    const bool live = mean[bin] > 0.0;
    const std::string base = prefix + "_top" + std::to_string(r + 1) + "_";
    fv.push(base + axis_name, live ? axis[bin] : 0.0, FeatureGroup::tempogram);
    fv.push(base + "mean", live ? mean[bin] : 0.0, FeatureGroup::tempogram);
    fv.push(base + "std", live ? sd[bin] : 0.0, FeatureGroup::tempogram);
    fv.push(base + "rel", live ? mean[bin] / strongest : 0.0, FeatureGroup::tempogram);
  }
  return fv;
}

inline FeatureVector tempogram_summary(const Tempogram& tg, int top_n = kSummaryTopBins) {
  return tempogram_summary(tg.magnitudes, tg.tempo_axis, top_n, "tg_" + std::string(to_string(tg.kind)), "bpm");
}

inline FeatureVector tempogram_summary(const CyclicTempogram& ct, int top_n = kSummaryTopBins) {
  return tempogram_summary(ct.magnitudes, ct.scale_axis, top_n, "tg_cyclic_" + std::string(to_string(ct.kind)), "scale");
}

/// Novelty and both tempograms of one clip, shared by the tempo estimators and
/// the tempogram feature block.
struct TempoAnalysis {
  NoveltyCurve novelty;
  Tempogram fourier;
  Tempogram autocorr;
};

inline TempoAnalysis analyze_tempo(const Spectrogram& spec) {
  TempoAnalysis a;
  a.novelty = novelty_curve(spec);
  a.fourier = fourier_tempogram(a.novelty);
  a.autocorr = autocorr_tempogram(a.novelty);
  return a;
}

inline FeatureVector tempogram_feature_vector(const TempoAnalysis& analysis) {
  FeatureVector fv;
  fv.append(tempogram_summary(analysis.fourier));
  fv.append(tempogram_summary(analysis.autocorr));
  fv.append(tempogram_summary(cyclic_tempogram(analysis.fourier)));
  fv.append(tempogram_summary(cyclic_tempogram(analysis.autocorr)));
  return fv;
}

/// 64 values: {fourier, autocorr, cyclic fourier, cyclic autocorr} x top 4 bins
/// x {axis value, mean, std, relative strength}.
inline FeatureVector tempogram_feature_vector(const AudioClip& clip) {
  if (clip.duration() < 10.0) throw std::invalid_argument("tempogram_feature_vector: clip shorter than 10 s");
  return tempogram_feature_vector(analyze_tempo(stft(clip)));
}

}  // namespace edm_atlas

#endif  // EDM_ATLAS_TEMPOGRAM_HPP
