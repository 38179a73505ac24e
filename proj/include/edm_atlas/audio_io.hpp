#ifndef EDM_ATLAS_AUDIO_IO_HPP
#define EDM_ATLAS_AUDIO_IO_HPP

// Audio decoding (RIFF/WAVE), resampling, short-time spectra and synthetic
// test signals.

#include "edm_atlas/common.hpp"

#include <unsupported/Eigen/FFT>

#include <array>
#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace edm_atlas {

/// Mono PCM buffer with amplitudes nominally in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kAnalysisRate;
  std::string source_id;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Magnitude spectra, frames x bins. Magnitudes are divided by the window sum,
/// so a sinusoid of amplitude A peaks near A/2.
struct Spectrogram {
  Matrix magnitudes;
  double frame_rate = 0.0;
  std::vector<double> bin_freqs;
  int sample_rate = kAnalysisRate;
  int window_len = 0;
  int hop = 0;
  double window_sum = 0.0;

  Eigen::Index frames() const { return magnitudes.rows(); }
  Eigen::Index bins() const { return magnitudes.cols(); }
};

inline constexpr int kDefaultWindow = 2048;
inline constexpr int kDefaultHop = 512;

class WavError : public std::runtime_error {
 public:
  enum class Kind { missing_file, malformed_header, unsupported_encoding, invalid_data };

  WavError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

enum class WavEncoding { pcm16, float32 };

namespace detail {

inline std::uint16_t read_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace detail

/// Decode a PCM WAV (16-bit integer or 32-bit float, mono or stereo) into a
/// mono clip. Stereo is averaged; 16-bit samples are scaled by 1/32768.
inline AudioClip decode_wav(std::span<const unsigned char> bytes, std::string source_id = {}) {
  using K = WavError::Kind;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw WavError(K::malformed_header, "not a RIFF/WAVE file: " + source_id);
  }

  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = detail::read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || available < 16) throw WavError(K::malformed_header, "truncated fmt chunk: " + source_id);
      const unsigned char* f = chunk + 8;
      format = detail::read_u16(f);
      channels = detail::read_u16(f + 2);
      rate = detail::read_u32(f + 4);
      block_align = detail::read_u16(f + 12);
      bits = detail::read_u16(f + 14);
      if (format == 0xFFFE) {
        if (size < 40 || available < 40) throw WavError(K::malformed_header, "truncated extensible fmt: " + source_id);
        format = detail::read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = std::min<std::size_t>(size, available);
      break;
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt) throw WavError(K::malformed_header, "missing fmt chunk: " + source_id);
  if (data == nullptr) throw WavError(K::malformed_header, "missing data chunk: " + source_id);
  if (rate == 0 || channels == 0 || block_align == 0) throw WavError(K::malformed_header, "invalid fmt fields: " + source_id);

  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32) {
    throw WavError(K::unsupported_encoding, "unsupported encoding (format " + std::to_string(format) + ", " +
                                                std::to_string(bits) + " bits): " + source_id);
  }
  if (channels > 2) {
    throw WavError(K::unsupported_encoding, std::to_string(channels) + " channels not supported: " + source_id);
  }
  const std::size_t bytes_per_sample = bits / 8;
  if (block_align != bytes_per_sample * channels) throw WavError(K::malformed_header, "inconsistent block align: " + source_id);

  const std::size_t frames = data_size / block_align;
  if (frames == 0) throw WavError(K::invalid_data, "no audio frames: " + source_id);

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.source_id = std::move(source_id);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + i * block_align + c * bytes_per_sample;
      if (pcm16) {
        acc += static_cast<std::int16_t>(detail::read_u16(p)) / 32768.0;
      } else {
        const std::uint32_t raw = detail::read_u32(p);
        float v;
        std::memcpy(&v, &raw, sizeof v);
        if (!std::isfinite(v)) throw WavError(K::invalid_data, "non-finite sample in " + clip.source_id);
        acc += v;
      }
    }
    clip.samples[i] = acc / channels;
  }
  return clip;
}

inline AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError(WavError::Kind::missing_file, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes, path.string());
}

/// Interleaved multi-channel encoder; `channels` holds one buffer per channel.
inline std::string encode_wav(const std::vector<std::vector<double>>& channels, int sample_rate, WavEncoding encoding) {
  if (channels.empty() || channels.front().empty()) throw std::invalid_argument("encode_wav: no samples");
  const std::size_t n = channels.front().size();
  for (const auto& c : channels) {
    if (c.size() != n) throw std::invalid_argument("encode_wav: channel length mismatch");
  }
  const auto nch = static_cast<std::uint16_t>(channels.size());
  const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
  const std::uint16_t block = static_cast<std::uint16_t>(nch * bits / 8);
  const auto data_bytes = static_cast<std::uint32_t>(n * block);

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, encoding == WavEncoding::pcm16 ? 1 : 3);
  detail::put_u16(out, nch);
  detail::put_u32(out, static_cast<std::uint32_t>(sample_rate));
  detail::put_u32(out, static_cast<std::uint32_t>(sample_rate) * block);
  detail::put_u16(out, block);
  detail::put_u16(out, bits);
  out += "data";
  detail::put_u32(out, data_bytes);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& c : channels) {
      const double v = std::clamp(c[i], -1.0, 1.0);
      if (encoding == WavEncoding::pcm16) {
        const auto q = static_cast<std::int16_t>(std::clamp(std::lround(v * 32767.0), -32768L, 32767L));
        detail::put_u16(out, static_cast<std::uint16_t>(q));
      } else {
        const float f = static_cast<float>(v);
        std::uint32_t raw;
        std::memcpy(&raw, &f, sizeof raw);
        detail::put_u32(out, raw);
      }
    }
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding = WavEncoding::float32) {
  const std::string bytes = encode_wav({clip.samples}, clip.sample_rate, encoding);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Band-limited resampling with a Kaiser-windowed sinc kernel. The kernel
/// cutoff follows the lower of the two Nyquist rates.
inline AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw std::invalid_argument("resample: target rate must be positive");
  if (target_rate == clip.sample_rate) return clip;

  constexpr int kZeroCrossings = 32;
  constexpr double kBeta = 9.0;
  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const double cutoff = std::min(1.0, ratio) * 0.97;
  const double half_width = kZeroCrossings / cutoff;
  constexpr int kTable = 4096;
  std::vector<double> kaiser(kTable + 2);
  const double i0_beta = std::cyl_bessel_i(0.0, kBeta);
  for (int i = 0; i <= kTable + 1; ++i) {
    const double r = std::min(1.0, static_cast<double>(i) / kTable);
    kaiser[static_cast<std::size_t>(i)] = std::cyl_bessel_i(0.0, kBeta * std::sqrt(1.0 - r * r)) / i0_beta;
  }

  const auto n_in = static_cast<long>(clip.samples.size());
  const auto n_out = static_cast<long>(std::lround(static_cast<double>(n_in) * ratio));

  AudioClip out;
  out.sample_rate = target_rate;
  out.source_id = clip.source_id;
  out.samples.assign(static_cast<std::size_t>(std::max(n_out, 1L)), 0.0);
  for (long i = 0; i < n_out; ++i) {
    const double t = static_cast<double>(i) / ratio;
    const long j0 = static_cast<long>(std::ceil(t - half_width));
    const long j1 = static_cast<long>(std::floor(t + half_width));
    double acc = 0.0;
    for (long j = std::max(j0, 0L); j <= std::min(j1, n_in - 1); ++j) {
      const double d = t - static_cast<double>(j);
      const double x = d * cutoff;
      const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
      const double pos = std::min(1.0, std::abs(d) / half_width) * kTable;
      const auto idx = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(idx);
      const double w = kaiser[idx] + frac * (kaiser[idx + 1] - kaiser[idx]);
      acc += clip.samples[static_cast<std::size_t>(j)] * cutoff * sinc * w;
    }
    out.samples[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

/// Periodic Hann window.
inline std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
  return w;
}

/// Hann-windowed magnitude STFT without padding:
/// frames = 1 + floor((len - window_len) / hop).
inline Spectrogram stft(const AudioClip& clip, int window_len = kDefaultWindow, int hop = kDefaultHop) {
  const auto len = static_cast<long>(clip.samples.size());
  if (hop <= 0 || hop > window_len || window_len > len) {
    throw std::invalid_argument("stft: need 0 < hop <= window_len <= clip length");
  }
  const auto window = hann_window(window_len);
  const double wsum = std::accumulate(window.begin(), window.end(), 0.0);
  const long frames = 1 + (len - window_len) / hop;
  const int bins = window_len / 2 + 1;

  Spectrogram spec;
  spec.sample_rate = clip.sample_rate;
  spec.window_len = window_len;
  spec.hop = hop;
  spec.window_sum = wsum;
  spec.frame_rate = static_cast<double>(clip.sample_rate) / hop;
  spec.bin_freqs.resize(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) spec.bin_freqs[static_cast<std::size_t>(k)] = static_cast<double>(k) * clip.sample_rate / window_len;
  spec.magnitudes.resize(frames, bins);

  Eigen::FFT<double> fft;
  std::vector<double> frame(static_cast<std::size_t>(window_len));
  std::vector<std::complex<double>> out;
  for (long t = 0; t < frames; ++t) {
    const double* src = clip.samples.data() + t * hop;
    for (int i = 0; i < window_len; ++i) frame[static_cast<std::size_t>(i)] = src[i] * window[static_cast<std::size_t>(i)];
    fft.fwd(out, frame);
    for (int k = 0; k < bins; ++k) spec.magnitudes(t, k) = std::abs(out[static_cast<std::size_t>(k)]) / wsum;
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Fixture synthesis.

/// Unit-amplitude 5 ms clicks starting at every multiple of 60/bpm seconds.
inline AudioClip synth_click_track(double bpm, double duration, int rate = kAnalysisRate) {
  if (bpm < 30.0 || bpm > 480.0) throw std::invalid_argument("synth_click_track: bpm must lie in [30, 480]");
  if (duration <= 0.0) throw std::invalid_argument("synth_click_track: duration must be positive");
  if (rate <= 0) throw std::invalid_argument("synth_click_track: rate must be positive");
  AudioClip clip;
  clip.sample_rate = rate;
  clip.source_id = "click_" + std::to_string(bpm);
  const auto n = static_cast<std::size_t>(std::lround(duration * rate));
  const auto click_len = static_cast<std::size_t>(std::lround(0.005 * rate));
  clip.samples.assign(n, 0.0);
  const double period = 60.0 / bpm * rate;
  for (std::size_t beat = 0;; ++beat) {
    const auto onset = static_cast<std::size_t>(std::llround(static_cast<double>(beat) * period));
    if (onset >= n) break;
    for (std::size_t i = onset; i < std::min(n, onset + click_len); ++i) clip.samples[i] = 1.0;
  }
  return clip;
}

inline AudioClip synth_sine(double freq, double duration, int rate = kAnalysisRate, double amplitude = 1.0, double phase = 0.0) {
  AudioClip clip;
  clip.sample_rate = rate;
  clip.source_id = "sine";
  const auto n = static_cast<std::size_t>(std::lround(duration * rate));
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) clip.samples[i] = amplitude * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / rate + phase);
  return clip;
}

/// Uniform white noise in [-amplitude, amplitude].
inline AudioClip synth_white_noise(double duration, std::uint64_t seed, int rate = kAnalysisRate, double amplitude = 1.0) {
  AudioClip clip;
  clip.sample_rate = rate;
  clip.source_id = "noise";
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(std::lround(duration * rate));
  clip.samples.resize(n);
  for (auto& s : clip.samples) s = amplitude * rng.uniform(-1.0, 1.0);
  return clip;
}

}  // namespace edm_atlas

#endif  // EDM_ATLAS_AUDIO_IO_HPP
