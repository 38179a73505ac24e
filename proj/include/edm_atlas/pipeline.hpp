#ifndef EDM_ATLAS_PIPELINE_HPP
#define EDM_ATLAS_PIPELINE_HPP

// End-to-end stages behind the command line tool. Each stage reads its inputs
// from disk, writes its outputs under the run's output directory and returns
// an exit code.

#include "edm_atlas/audio_io.hpp"
#include "edm_atlas/clustering.hpp"
#include "edm_atlas/dsp_features.hpp"
#include "edm_atlas/feature_table.hpp"
#include "edm_atlas/metrics.hpp"
#include "edm_atlas/preprocess_select.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace edm_atlas {

enum ExitCode : int { kExitOk = 0, kExitPartial = 1, kExitConfig = 2, kExitFatal = 3 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what) : std::runtime_error(stage + ": " + what) {}
};

struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path out_dir = "edm_atlas_out";
  /// Feature matrix to cluster; defaults to <out>/features.csv.
  std::filesystem::path features;
  std::filesystem::path embeddings;
  /// Cluster labels for profile/plot; defaults to <out>/labels_<method>.csv.
  std::filesystem::path labels;
  /// Optional override of the profile dimension rules.
  std::filesystem::path profile_map;
  std::uint64_t seed = 0;
  int k = 35;
  int k_min = 15;
  int k_max = 40;
  int restarts = kDefaultRestarts;
  std::size_t top_k = 100;
  std::string method = "kmeans";
  std::size_t workers = 0;
  int bootstrap = 50;

  std::filesystem::path features_path() const { return features.empty() ? out_dir / "features.csv" : features; }

  std::vector<ClusterMethod> methods() const {
    if (method == "both") return {ClusterMethod::kmeans, ClusterMethod::divisive};
    return {method == "divisive" ? ClusterMethod::divisive : ClusterMethod::kmeans};
  }

  void validate() const {
    if (method != "kmeans" && method != "divisive" && method != "both") throw ConfigError("method must be kmeans, divisive or both");
    if (k < 2) throw ConfigError("k must be at least 2");
    if (k_min < 2 || k_max <= k_min) throw ConfigError("need 2 <= k_min < k_max");
    if (restarts < 1) throw ConfigError("restarts must be positive");
    if (top_k < 1) throw ConfigError("top_k must be positive");
    if (bootstrap < 1) throw ConfigError("bootstrap must be positive");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || p != value.data() + value.size()) throw ConfigError("config key '" + key + "': not a number: " + value);
  return out;
}

}  // namespace detail

/// Applies one key=value setting. Keys match the long command line flags with
/// dashes replaced by underscores.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "manifest") c.manifest = value;
  else if (key == "out") c.out_dir = value;
  else if (key == "features") c.features = value;
  else if (key == "embeddings") c.embeddings = value;
  else if (key == "labels") c.labels = value;
  else if (key == "profile_map") c.profile_map = value;
  else if (key == "seed") c.seed = detail::parse_number<std::uint64_t>(key, value);
  else if (key == "k") c.k = detail::parse_number<int>(key, value);
  else if (key == "k_min") c.k_min = detail::parse_number<int>(key, value);
  else if (key == "k_max") c.k_max = detail::parse_number<int>(key, value);
  else if (key == "restarts") c.restarts = detail::parse_number<int>(key, value);
  else if (key == "top_k") c.top_k = detail::parse_number<std::size_t>(key, value);
  else if (key == "method") c.method = value;
  else if (key == "workers") c.workers = detail::parse_number<std::size_t>(key, value);
  else if (key == "bootstrap") c.bootstrap = detail::parse_number<int>(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

/// Flat key=value file; '#' starts a comment line. Relative paths stay
/// relative to the working directory.
inline RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    apply_setting(base, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
  return base;
}

// ---------------------------------------------------------------------------
// Fixtures.

struct FixtureSpec {
  std::vector<std::string> genres = {"house", "techno", "trance", "drum_and_bass"};
  std::vector<double> bpms = {120.0, 128.0, 140.0, 174.0};
  int tracks_per_genre = 10;
  double duration = 12.0;
  int sample_rate = kAnalysisRate;
};

namespace detail {

/// One synthetic track. Each family has its own tempo and timbre: clicks over a
/// pad, a decaying sub kick with off-beat hats, clicks under a triad, and noise
/// snares over a bass tone. Small seeded detuning varies tracks within a family.
inline AudioClip synth_fixture_track(std::size_t family, double bpm, double duration, int rate, std::uint64_t seed) {
  Rng rng(seed);
  const double detune = 1.0 + rng.uniform(-0.02, 0.02);
  const double gain = rng.uniform(0.7, 0.9);
  const auto n = static_cast<std::size_t>(std::lround(duration * rate));
  std::vector<double> y(n, 0.0);
  const double beat = 60.0 / bpm;
  auto tone = [&](double freq, double amp) {
    for (std::size_t i = 0; i < n; ++i) y[i] += amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / rate);
  };
  auto each_beat = [&](double offset, double length, auto&& shape) {
    for (double t0 = offset; t0 < duration; t0 += beat) {
      const auto start = static_cast<std::size_t>(std::lround(t0 * rate));
      const auto len = static_cast<std::size_t>(std::lround(length * rate));
      for (std::size_t i = 0; i < len && start + i < n; ++i) y[start + i] += shape(static_cast<double>(i) / rate);
    }
  };
  switch (family % 4) {
    case 0:
      tone(220.0 * detune, 0.3);
      each_beat(0.0, 0.005, [](double) { return 1.0; });
      break;
    case 1:
      each_beat(0.0, 0.15, [&](double t) { return 0.9 * std::exp(-t / 0.04) * std::sin(2.0 * M_PI * 55.0 * detune * t); });
      each_beat(beat / 2.0, 0.02, [&](double) { return 0.2 * rng.uniform(-1.0, 1.0); });
      break;
    case 2:
      for (double f : {440.0, 554.37, 659.26}) tone(f * detune, 0.15);
      each_beat(0.0, 0.005, [](double) { return 1.0; });
      break;
    default:
      tone(82.0 * detune, 0.3);
      each_beat(0.0, 0.06, [&](double t) { return 0.6 * std::exp(-t / 0.02) * rng.uniform(-1.0, 1.0); });
      break;
  }
  for (double& v : y) v = std::clamp(gain * v, -1.0, 1.0);
  AudioClip clip;
  clip.samples = std::move(y);
  clip.sample_rate = rate;
  return clip;
}

}  // namespace detail

/// Writes <out>/audio/<id>.wav and <out>/manifest.csv.
inline int cmd_fixtures(const std::filesystem::path& out_dir, std::uint64_t seed, const FixtureSpec& spec = {}) {
  if (spec.genres.size() != spec.bpms.size()) throw ConfigError("fixtures: one bpm per genre is required");
  if (spec.tracks_per_genre < 1 || spec.duration <= 0.0) throw ConfigError("fixtures: need a positive track count and duration");
  std::vector<TrackRecord> records;
  for (std::size_t g = 0; g < spec.genres.size(); ++g) {
    for (int t = 0; t < spec.tracks_per_genre; ++t) {
      TrackRecord r;
      r.track_id = fmt::format("{}_{:02d}", spec.genres[g], t);
      r.path = std::filesystem::path("audio") / (r.track_id + ".wav");
      r.genre = spec.genres[g];
      r.bpm = spec.bpms[g];
      r.length_s = spec.duration;
      const AudioClip clip = detail::synth_fixture_track(g, spec.bpms[g], spec.duration, spec.sample_rate, derive_seed(seed, "fixture/" + r.track_id));
      write_wav(out_dir / r.path, clip, WavEncoding::float32);
      records.push_back(std::move(r));
    }
  }
  csv::write_file(out_dir / "manifest.csv", manifest_to_csv(records));
  spdlog::info("fixtures: wrote {} tracks to {}", records.size(), out_dir.string());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Extraction.

/// Decodes, resamples to the analysis rate and extracts every track. Failed
/// tracks are logged and omitted; returns 1 when any track failed.
inline int cmd_extract(const RunConfig& cfg) {
  if (cfg.manifest.empty()) throw ConfigError("extract: --manifest is required");
  std::vector<TrackRecord> records;
  try {
    records = load_manifest(cfg.manifest);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("extract: ") + e.what());
  }
  std::vector<std::optional<FeatureVector>> results(records.size());
  std::vector<std::string> errors(records.size());
  parallel_for(records.size(), cfg.workers, [&](std::size_t i) {
    try {
      AudioClip clip = load_wav(records[i].path);
      if (clip.sample_rate != kAnalysisRate) clip = resample(clip, kAnalysisRate);
      results[i] = extract_track_features(clip);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  std::vector<TrackRecord> ok_records;
  std::vector<FeatureVector> vectors;
  std::vector<std::string> failed;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (results[i]) {
      ok_records.push_back(records[i]);
      vectors.push_back(std::move(*results[i]));
    } else {
      spdlog::warn("extract: track {} failed: {}", records[i].track_id, errors[i]);
      failed.push_back(records[i].track_id);
    }
  }
  if (ok_records.empty()) throw StageError("extract", "every track failed");
  if (!failed.empty()) spdlog::warn("extract: {} of {} tracks omitted: {}", failed.size(), records.size(), fmt::join(failed, ", "));
  const FeatureMatrix m = assemble_matrix(ok_records, vectors);
  save_matrix(m, cfg.out_dir / "features.csv");
  spdlog::info("extract: {} tracks x {} features", m.n_rows(), m.n_cols());
  return failed.empty() ? kExitOk : kExitPartial;
}

// ---------------------------------------------------------------------------
// Preparation shared by cluster, sweep and plot.

struct PreparedData {
  FeatureMatrix matrix;
  /// Genre per row; empty without a manifest.
  std::vector<std::string> genres;
  std::optional<SelectionReport> selection;
  bool from_embeddings = false;
};

inline std::map<std::string, std::string> genre_by_id(const std::vector<TrackRecord>& records) {
  std::map<std::string, std::string> out;
  for (const auto& r : records) out.emplace(r.track_id, r.genre);
  return out;
}

/// Embeddings are clustered raw. Extracted features go through engineering,
/// normalization and selection, which need genre labels from the manifest;
/// without a manifest the matrix is used as is.
inline PreparedData prepare_matrix(const RunConfig& cfg) {
  PreparedData p;
  std::vector<TrackRecord> records;
  if (!cfg.manifest.empty()) {
    try {
      records = load_manifest(cfg.manifest);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  if (!cfg.embeddings.empty()) {
    if (records.empty()) throw ConfigError("embeddings require --manifest");
    try {
      p.matrix = import_embeddings(cfg.embeddings, records).matrix;
    } catch (const std::exception& e) {
      throw StageError("import", e.what());
    }
    for (const auto& r : records) p.genres.push_back(r.genre);
    p.from_embeddings = true;
    return p;
  }

  FeatureMatrix raw;
  try {
    raw = load_matrix(cfg.features_path());
  } catch (const std::exception& e) {
    throw StageError("load", e.what());
  }
  if (records.empty()) {
    spdlog::warn("prepare: no manifest; clustering {} without feature selection", cfg.features_path().string());
    p.matrix = std::move(raw);
    return p;
  }
  const auto genres = genre_by_id(records);
  for (const auto& id : raw.rows) {
    const auto it = genres.find(id);
    if (it == genres.end()) throw StageError("prepare", "track " + id + " is not in the manifest");
    p.genres.push_back(it->second);
  }
  try {
    const FeatureMatrix engineered = engineer_features(raw);
    const FeatureMatrix normalized = ensemble_normalize(engineered, {}, cfg.workers);
    SelectionOptions opt;
    opt.top_k = std::min<std::size_t>(cfg.top_k, static_cast<std::size_t>(normalized.n_cols()));
    if (opt.top_k < cfg.top_k) spdlog::warn("prepare: only {} features available; top_k lowered from {}", opt.top_k, cfg.top_k);
    opt.seed = cfg.seed;
    opt.workers = cfg.workers;
    auto [selected, report] = ensemble_select(normalized, make_label_vector(p.genres), opt);
    p.matrix = std::move(selected);
    p.selection = std::move(report);
  } catch (const std::exception& e) {
    throw StageError("select", e.what());
  }
  return p;
}

// ---------------------------------------------------------------------------
// Clustering.

inline std::string labels_to_csv(const std::vector<std::string>& ids, const Labels& labels) {
  std::string out = "track_id,cluster\n";
  for (std::size_t i = 0; i < ids.size(); ++i) out += csv::quote(ids[i]) + "," + std::to_string(labels[i]) + "\n";
  return out;
}

/// Labels aligned to `ids`; every id must appear in the file.
inline Labels load_labels(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw TableError(path.string() + ": empty labels file");
  std::map<std::string, int> by_id;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = csv::split(lines[i]);
    if (f.size() < 2) throw TableError(path.string() + ": line " + std::to_string(i + 1) + " needs track_id,cluster");
    by_id[f[0]] = detail::parse_number<int>("cluster", f[1]);
  }
  Labels out;
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw TableError(path.string() + ": no label for track " + id);
    out.push_back(it->second);
  }
  return out;
}

inline nlohmann::ordered_json model_to_json(const ClusterModel& m) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["method"] = std::string(to_string(m.method));
  j["k"] = m.k;
  j["seed"] = m.seed;
  j["inertia"] = m.inertia;
  j["reached_target"] = m.reached_target;
  auto& c = j["centroids"] = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.centroids.rows(); ++r) {
    std::vector<double> row(m.centroids.row(r).data(), m.centroids.row(r).data() + m.centroids.cols());
    c.push_back(row);
  }
  auto& tree = j["split_tree"] = nlohmann::ordered_json::array();
  for (const auto& n : m.split_tree) {
    tree.push_back({{"id", n.id}, {"parent", n.parent}, {"left", n.left}, {"right", n.right}, {"size", n.size},
                    {"heterogeneity", n.heterogeneity}, {"label", n.label}});
  }
  return j;
}

inline ClusterModel run_method(const Matrix& x, ClusterMethod method, int k, int restarts, std::uint64_t seed) {
  if (method == ClusterMethod::kmeans) return kmeans(x, k, restarts, derive_seed(seed, "cluster/kmeans"));
  return divisive_cluster(x, k, derive_seed(seed, "cluster/divisive"));
}

/// Writes selection artifacts, then labels, model and report per method.
inline int cmd_cluster(const RunConfig& cfg) {
  cfg.validate();
  const PreparedData p = prepare_matrix(cfg);
  if (cfg.k >= p.matrix.n_rows()) {
    throw ConfigError(fmt::format("cluster: k = {} needs more than {} tracks", cfg.k, p.matrix.n_rows()));
  }
  if (p.selection) {
    csv::write_file(cfg.out_dir / "selection_report.csv", selection_report_to_csv(*p.selection));
    save_matrix(p.matrix, cfg.out_dir / "prepared.csv");
  }
  const Labels truth = p.genres.empty() ? Labels{} : encode_labels(p.genres);
  for (ClusterMethod method : cfg.methods()) {
    const std::string name(to_string(method));
    ClusterModel model;
    EvaluationReport report;
    try {
      model = run_method(p.matrix.data, method, cfg.k, cfg.restarts, cfg.seed);
      EvaluationOptions eo;
      eo.bootstrap_rounds = cfg.bootstrap;
      eo.workers = cfg.workers;
      report = evaluate_all(p.matrix.data, model, truth, make_clusterer(method, cfg.k, cfg.restarts), eo);
    } catch (const std::exception& e) {
      throw StageError("cluster/" + name, e.what());
    }
    auto j = to_json(report);
    j["selection"] = p.from_embeddings || !p.selection ? "skipped" : "applied";
    j["n_tracks"] = p.matrix.n_rows();
    j["n_features"] = p.matrix.n_cols();
    csv::write_file(cfg.out_dir / ("labels_" + name + ".csv"), labels_to_csv(p.matrix.rows, model.labels));
    csv::write_file(cfg.out_dir / ("report_" + name + ".json"), j.dump(2) + "\n");
    csv::write_file(cfg.out_dir / ("model_" + name + ".json"), model_to_json(model).dump(2) + "\n");
    spdlog::info("cluster/{}: k = {}, silhouette = {}", name, report.k, report.silhouette ? fmt::format("{:.4f}", *report.silhouette) : "n/a");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Sweep.

inline std::string sweep_to_csv(const KSweepResult& r) {
  std::string out = "k,silhouette,calinski_harabasz,inertia,elbow,silhouette_norm,calinski_harabasz_norm,elbow_norm,consensus\n";
  for (const auto& row : r.rows) {
    out += std::to_string(row.k);
    for (double v : {row.silhouette, row.calinski_harabasz, row.inertia, row.elbow, row.silhouette_norm, row.calinski_harabasz_norm,
                     row.elbow_norm, row.consensus}) {
      out += "," + csv::format_double(v);
    }
    out += "\n";
  }
  return out;
}

/// Writes sweep.csv and sweep.json and prints chosen_k to stdout.
inline int cmd_sweep(const RunConfig& cfg, std::ostream& stdout_stream = std::cout) {
  cfg.validate();
  const PreparedData p = prepare_matrix(cfg);
  if (cfg.k_max >= p.matrix.n_rows()) {
    throw ConfigError(fmt::format("sweep: k_max = {} needs more than {} tracks", cfg.k_max, p.matrix.n_rows()));
  }
  KSweepResult r;
  try {
    r = select_natural_k(p.matrix.data, cfg.k_min, cfg.k_max, derive_seed(cfg.seed, "sweep"), cfg.restarts, {}, cfg.workers);
  } catch (const std::exception& e) {
    throw StageError("sweep", e.what());
  }
  csv::write_file(cfg.out_dir / "sweep.csv", sweep_to_csv(r));
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["k_min"] = cfg.k_min;
  j["k_max"] = cfg.k_max;
  j["seed"] = cfg.seed;
  j["chosen_k"] = r.chosen_k;
  csv::write_file(cfg.out_dir / "sweep.json", j.dump(2) + "\n");
  stdout_stream << "chosen_k=" << r.chosen_k << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Profiles and plots.

inline std::string svg_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Six-axis radar chart of one cluster's percentiles.
inline std::string radar_svg(const ClusterProfile& p) {
  constexpr double cx = 200.0, cy = 200.0, radius = 140.0;
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"420\" viewBox=\"0 0 400 420\">\n";
  out += "<rect width=\"400\" height=\"420\" fill=\"white\"/>\n";
  auto point = [&](std::size_t axis, double frac) {
    const double angle = -M_PI / 2.0 + 2.0 * M_PI * static_cast<double>(axis) / 6.0;
    return std::pair{cx + radius * frac * std::cos(angle), cy + radius * frac * std::sin(angle)};
  };
  for (double ring : {0.25, 0.5, 0.75, 1.0}) {
    std::string pts;
    for (std::size_t a = 0; a < 6; ++a) {
      const auto [x, y] = point(a, ring);
      pts += fmt::format("{}{:.2f},{:.2f}", a ? " " : "", x, y);
    }
    out += fmt::format("<polygon points=\"{}\" fill=\"none\" stroke=\"#cccccc\"/>\n", pts);
  }
  for (std::size_t a = 0; a < 6; ++a) {
    const auto [x, y] = point(a, 1.0);
    const auto [lx, ly] = point(a, 1.18);
    out += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#999999\"/>\n", cx, cy, x, y);
    const std::string label = p.percentiles[a] ? std::string(kProfileDimensions[a]) : std::string(kProfileDimensions[a]) + " (n/a)";
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n", lx, ly, svg_escape(label));
  }
  std::string pts;
  for (std::size_t a = 0; a < 6; ++a) {
    const auto [x, y] = point(a, p.percentiles[a].value_or(0.0) / 100.0);
    pts += fmt::format("{}{:.2f},{:.2f}", a ? " " : "", x, y);
  }
  out += fmt::format("<polygon points=\"{}\" fill=\"#1f77b4\" fill-opacity=\"0.35\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n", pts);
  std::string title = fmt::format("Cluster {} (n = {})", p.cluster, p.size);
  if (!p.majority_genre.empty()) title += fmt::format(", {} {:.0f}%", p.majority_genre, 100.0 * p.purity);
  out += fmt::format("<text x=\"200\" y=\"410\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n", svg_escape(title));
  out += "</svg>\n";
  return out;
}

inline std::string method_for_outputs(const RunConfig& cfg) { return cfg.method == "both" ? "kmeans" : cfg.method; }

inline std::filesystem::path labels_path(const RunConfig& cfg) {
  return cfg.labels.empty() ? cfg.out_dir / ("labels_" + method_for_outputs(cfg) + ".csv") : cfg.labels;
}

/// Profiles are computed on the unselected feature matrix so the name rules
/// see every extracted column.
inline int cmd_profile(const RunConfig& cfg) {
  FeatureMatrix m;
  Labels labels;
  try {
    m = cfg.embeddings.empty() ? load_matrix(cfg.features_path()) : prepare_matrix(cfg).matrix;
    labels = load_labels(labels_path(cfg), m.rows);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("profile", e.what());
  }
  std::vector<std::string> genres;
  if (!cfg.manifest.empty()) {
    const auto by_id = genre_by_id(load_manifest(cfg.manifest));
    for (const auto& id : m.rows) {
      const auto it = by_id.find(id);
      genres.push_back(it == by_id.end() ? std::string() : it->second);
    }
  }
  const auto rules = cfg.profile_map.empty() ? default_profile_rules() : load_profile_rules(cfg.profile_map);
  const auto profiles = cluster_profiles(m, labels, genres, rules);
  const std::string name = method_for_outputs(cfg);
  csv::write_file(cfg.out_dir / ("profiles_" + name + ".csv"), profiles_to_csv(profiles));
  for (const auto& p : profiles) {
    csv::write_file(cfg.out_dir / fmt::format("profile_{}_cluster{:02d}.svg", name, p.cluster), radar_svg(p));
  }
  return kExitOk;
}

struct Projection {
  Matrix scores;  // n x 2
  double variance1 = 0.0;
  double variance2 = 0.0;
};

/// Top two principal components from the covariance eigendecomposition. Each
/// axis is signed so its largest-magnitude loading is positive.
inline Projection pca_2d(const Matrix& x) {
  if (x.cols() < 2) throw std::invalid_argument("pca: need at least 2 columns");
  if (x.rows() < 2) throw std::invalid_argument("pca: need at least 2 rows");
  const Matrix centered = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index d = cov.cols();
  Eigen::MatrixXd axes(d, 2);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    axes.col(c) = v;
  }
  Projection p;
  p.scores = centered * axes;
  p.variance1 = std::max(0.0, eig.eigenvalues()(d - 1));
  p.variance2 = std::max(0.0, eig.eigenvalues()(d - 2));
  return p;
}

inline constexpr std::array<std::string_view, 12> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                                              "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};

inline std::string scatter_svg(const Projection& p, const Labels& labels) {
  constexpr double w = 640.0, h = 480.0, margin = 40.0, plot_w = 460.0;
  const double x0 = p.scores.col(0).minCoeff(), x1 = p.scores.col(0).maxCoeff();
  const double y0 = p.scores.col(1).minCoeff(), y1 = p.scores.col(1).maxCoeff();
  auto sx = [&](double v) { return x1 > x0 ? margin + (v - x0) / (x1 - x0) * (plot_w - margin) : margin + (plot_w - margin) / 2.0; };
  auto sy = [&](double v) { return y1 > y0 ? h - margin - (v - y0) / (y1 - y0) * (h - 2.0 * margin) : h / 2.0; };
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\">\n", w, h, w, h);
  out += fmt::format("<rect width=\"{:.0f}\" height=\"{:.0f}\" fill=\"white\"/>\n", w, h);
  out += fmt::format("<text x=\"{:.0f}\" y=\"{:.0f}\" font-size=\"12\" text-anchor=\"middle\">PC1 (var {:.3g})</text>\n", (margin + plot_w) / 2.0,
                     h - 10.0, p.variance1);
  out += fmt::format("<text x=\"14\" y=\"{:.0f}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.0f})\">PC2 (var {:.3g})</text>\n",
                     h / 2.0, h / 2.0, p.variance2);
  for (Eigen::Index i = 0; i < p.scores.rows(); ++i) {
    const int c = labels[static_cast<std::size_t>(i)];
    out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"4\" fill=\"{}\" class=\"cluster-{}\"/>\n", sx(p.scores(i, 0)), sy(p.scores(i, 1)),
                       kPalette[static_cast<std::size_t>(c) % kPalette.size()], c);
  }
  std::vector<int> ids(labels.begin(), labels.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const double y = margin + 18.0 * static_cast<double>(r);
    out += fmt::format("<circle cx=\"{:.0f}\" cy=\"{:.0f}\" r=\"5\" fill=\"{}\"/>\n", plot_w + 30.0, y,
                       kPalette[static_cast<std::size_t>(ids[r]) % kPalette.size()]);
    out += fmt::format("<text x=\"{:.0f}\" y=\"{:.0f}\" font-size=\"12\">cluster {}</text>\n", plot_w + 42.0, y + 4.0, ids[r]);
  }
  out += "</svg>\n";
  return out;
}

inline int cmd_plot(const RunConfig& cfg) {
  const PreparedData p = prepare_matrix(cfg);
  if (p.matrix.n_cols() < 2) throw StageError("plot", "need at least 2 feature columns");
  Labels labels;
  try {
    labels = load_labels(labels_path(cfg), p.matrix.rows);
  } catch (const std::exception& e) {
    throw StageError("plot", e.what());
  }
  csv::write_file(cfg.out_dir / ("scatter_" + method_for_outputs(cfg) + ".svg"), scatter_svg(pca_2d(p.matrix.data), labels));
  return kExitOk;
}

}  // namespace edm_atlas

#endif  // EDM_ATLAS_PIPELINE_HPP
