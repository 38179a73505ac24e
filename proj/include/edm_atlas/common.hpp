#ifndef EDM_ATLAS_COMMON_HPP
#define EDM_ATLAS_COMMON_HPP

#include <Eigen/Dense>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>
#include <atomic>
#include <exception>
#include <mutex>

namespace edm_atlas {

/// Dense row-major matrix; rows are observations (frames, tracks), columns are variables.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Canonical analysis rate. Every feature extractor assumes clips at this rate.
inline constexpr int kAnalysisRate = 22050;

/// Column group tag. The first four are produced by the fundamental extractor.
enum class FeatureGroup { spectral, timbral, harmonic, rhythmic, tempogram, meta, engineered, embedding };

inline constexpr std::string_view to_string(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::spectral: return "spectral";
    case FeatureGroup::timbral: return "timbral";
    case FeatureGroup::harmonic: return "harmonic";
    case FeatureGroup::rhythmic: return "rhythmic";
    case FeatureGroup::tempogram: return "tempogram";
    case FeatureGroup::meta: return "meta";
    case FeatureGroup::engineered: return "engineered";
    case FeatureGroup::embedding: return "embedding";
  }
  return "unknown";
}

inline std::optional<FeatureGroup> parse_feature_group(std::string_view s) {
  for (auto g : {FeatureGroup::spectral, FeatureGroup::timbral, FeatureGroup::harmonic, FeatureGroup::rhythmic,
                 FeatureGroup::tempogram, FeatureGroup::meta, FeatureGroup::engineered, FeatureGroup::embedding}) {
    if (to_string(g) == s) return g;
  }
  return std::nullopt;
}

/// Named, group-tagged feature values for one track.
struct FeatureVector {
  std::vector<double> values;
  std::vector<std::string> names;
  std::vector<FeatureGroup> groups;

  std::size_t size() const { return values.size(); }

  void push(std::string name, double value, FeatureGroup group) {
    names.push_back(std::move(name));
    values.push_back(value);
    groups.push_back(group);
  }

  void append(const FeatureVector& other) {
    values.insert(values.end(), other.values.begin(), other.values.end());
    names.insert(names.end(), other.names.begin(), other.names.end());
    groups.insert(groups.end(), other.groups.begin(), other.groups.end());
  }

  /// Value by name; throws std::out_of_range when absent.
  double at(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return values[i];
    }
    throw std::out_of_range("no feature named " + std::string(name));
  }
};

// ---------------------------------------------------------------------------
// Seeding. All randomness derives from one root seed; each stage mixes in a
// hash of its name so reruns of a single stage reproduce the full-run values.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stage) {
  return splitmix64(root ^ fnv1a(stage));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return splitmix64(root + splitmix64(index + 0x632BE59BD9B4E019ULL));
}

/// Small deterministic generator. std distributions are avoided so streams are
/// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0;
    while (u <= 0.0) u = uniform();
    const double v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    spare_ = r * std::sin(2.0 * M_PI * v);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * v);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Small numeric helpers shared across modules.

inline double mean_of(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Population standard deviation (divides by n).
inline double std_of(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x);
  double acc = 0.0;
  for (double v : x) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(x.size()));
}

/// Linear-interpolated quantile of already sorted data, q in [0, 1].
inline double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads (0 = hardware
/// concurrency). Callers write results into per-index slots, so the outcome
/// does not depend on scheduling. The first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Sends logs to stderr at the level named by EDM_ATLAS_LOG (error, warn,
/// info, debug). Defaults to warn.
inline void configure_logging_from_env() {
  if (!spdlog::get("edm_atlas")) spdlog::set_default_logger(spdlog::stderr_color_mt("edm_atlas"));
  const char* env = std::getenv("EDM_ATLAS_LOG");
  const std::string level = env ? env : "warn";
  if (level == "error") spdlog::set_level(spdlog::level::err);
  else if (level == "info") spdlog::set_level(spdlog::level::info);
  else if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else spdlog::set_level(spdlog::level::warn);
}

}  // namespace edm_atlas

#endif  // EDM_ATLAS_COMMON_HPP
