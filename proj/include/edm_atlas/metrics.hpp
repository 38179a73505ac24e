#ifndef EDM_ATLAS_METRICS_HPP
#define EDM_ATLAS_METRICS_HPP

// External agreement metrics, stability, balance, and per-cluster acoustic
// profiles. Logarithms are natural throughout.

#include "edm_atlas/cluster_indices.hpp"
#include "edm_atlas/clustering.hpp"
#include "edm_atlas/feature_table.hpp"

#include <json.hpp>

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace edm_atlas {

/// Maps string labels to ints in order of first appearance.
inline Labels encode_labels(const std::vector<std::string>& names) {
  std::map<std::string, int> ids;
  Labels out;
  out.reserve(names.size());
  for (const auto& s : names) out.push_back(ids.emplace(s, static_cast<int>(ids.size())).first->second);
  return out;
}

/// Contingency counts between two labelings, both compacted.
struct Contingency {
  std::vector<std::vector<double>> table;  // pred x true
  std::vector<double> pred_sizes;
  std::vector<double> true_sizes;
  double n = 0.0;
};

inline Contingency contingency(std::span<const int> pred, std::span<const int> truth, const char* who = "contingency") {
  if (pred.size() != truth.size()) throw std::invalid_argument(std::string(who) + ": label vectors differ in length");
  std::vector<int> p, t;
  const int kp = compact_labels(pred, p);
  const int kt = compact_labels(truth, t);
  Contingency c;
  c.table.assign(static_cast<std::size_t>(kp), std::vector<double>(static_cast<std::size_t>(kt), 0.0));
  c.pred_sizes.assign(static_cast<std::size_t>(kp), 0.0);
  c.true_sizes.assign(static_cast<std::size_t>(kt), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    c.table[static_cast<std::size_t>(p[i])][static_cast<std::size_t>(t[i])] += 1.0;
    c.pred_sizes[static_cast<std::size_t>(p[i])] += 1.0;
    c.true_sizes[static_cast<std::size_t>(t[i])] += 1.0;
  }
  c.n = static_cast<double>(p.size());
  return c;
}

namespace detail {

inline double entropy_of_sizes(const std::vector<double>& sizes, double n) {
  double h = 0.0;
  for (double s : sizes) {
    if (s > 0.0) h -= (s / n) * std::log(s / n);
  }
  return h;
}

inline double mutual_information(const Contingency& c) {
  double mi = 0.0;
  for (std::size_t i = 0; i < c.table.size(); ++i) {
    for (std::size_t j = 0; j < c.table[i].size(); ++j) {
      const double nij = c.table[i][j];
      if (nij > 0.0) mi += (nij / c.n) * std::log(c.n * nij / (c.pred_sizes[i] * c.true_sizes[j]));
    }
  }
  return std::max(mi, 0.0);
}

inline double choose2(double x) { return x * (x - 1.0) / 2.0; }

inline bool same_partition(const Contingency& c) {
  // Identical partitions have exactly one nonzero cell per row and per column.
  if (c.pred_sizes.size() != c.true_sizes.size()) return false;
  for (std::size_t i = 0; i < c.table.size(); ++i) {
    if (std::count_if(c.table[i].begin(), c.table[i].end(), [](double v) { return v > 0.0; }) != 1) return false;
  }
  return true;
}

}  // namespace detail

/// Mutual information in nats.
inline double mi_score(std::span<const int> pred, std::span<const int> truth) {
  const auto c = contingency(pred, truth, "mi_score");
  if (c.n == 0.0) throw std::invalid_argument("mi_score: empty labelings");
  return detail::mutual_information(c);
}

/// I / sqrt(H_pred * H_true). Zero-entropy cases: 1 if the partitions agree, else 0.
inline double nmi(std::span<const int> pred, std::span<const int> truth) {
  const auto c = contingency(pred, truth, "nmi");
  if (c.n == 0.0) throw std::invalid_argument("nmi: empty labelings");
  const double hp = detail::entropy_of_sizes(c.pred_sizes, c.n);
  const double ht = detail::entropy_of_sizes(c.true_sizes, c.n);
  if (hp <= 0.0 || ht <= 0.0) return detail::same_partition(c) ? 1.0 : 0.0;
  return std::clamp(detail::mutual_information(c) / std::sqrt(hp * ht), 0.0, 1.0);
}

inline double ari(std::span<const int> pred, std::span<const int> truth) {
  const auto c = contingency(pred, truth, "ari");
  if (c.n < 2.0) throw std::invalid_argument("ari: need at least 2 samples");
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& row : c.table) {
    for (double v : row) sum_ij += detail::choose2(v);
  }
  for (double a : c.pred_sizes) sum_a += detail::choose2(a);
  for (double b : c.true_sizes) sum_b += detail::choose2(b);
  const double expected = sum_a * sum_b / detail::choose2(c.n);
  const double denom = 0.5 * (sum_a + sum_b) - expected;
  if (denom == 0.0) return detail::same_partition(c) ? 1.0 : 0.0;
  return (sum_ij - expected) / denom;
}

inline double purity(std::span<const int> pred, std::span<const int> truth) {
  const auto c = contingency(pred, truth, "purity");
  if (c.n == 0.0) throw std::invalid_argument("purity: empty labelings");
  double acc = 0.0;
  for (const auto& row : c.table) acc += *std::max_element(row.begin(), row.end());
  return acc / c.n;
}

struct Balance {
  double balance = 0.0;
  double normalized = 1.0;
};

/// Entropy of the cluster-size distribution and its ratio to ln(k).
inline Balance balance_metrics(std::span<const int> labels) {
  if (labels.empty()) throw std::invalid_argument("balance_metrics: empty labels");
  std::vector<int> lab;
  const int k = compact_labels(labels, lab);
  std::vector<double> sizes(static_cast<std::size_t>(k), 0.0);
  for (int l : lab) sizes[static_cast<std::size_t>(l)] += 1.0;
  Balance b;
  b.balance = detail::entropy_of_sizes(sizes, static_cast<double>(labels.size()));
  b.normalized = k == 1 ? 1.0 : b.balance / std::log(static_cast<double>(k));
  return b;
}

// ---------------------------------------------------------------------------
// Stability.

/// Clusters `x` with the given seed and returns one label per row.
using Clusterer = std::function<Labels(const Matrix& x, std::uint64_t seed)>;

inline Clusterer make_clusterer(ClusterMethod method, int k, int restarts = kDefaultRestarts) {
  if (method == ClusterMethod::kmeans) {
    return [k, restarts](const Matrix& x, std::uint64_t seed) { return kmeans(x, k, restarts, seed).labels; };
  }
  return [k](const Matrix& x, std::uint64_t seed) { return divisive_cluster(x, k, seed).labels; };
}

enum class Resample { bootstrap, identity };

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// Correlation between full-data co-assignment and mean co-assignment across
/// B resamples, over pairs seen together in at least min(5, B) resamples.
inline double cophenetic_bootstrap(const Matrix& x, std::span<const int> full_labels, const Clusterer& clusterer, int b = 50,
                                   std::uint64_t seed = 0, Resample mode = Resample::bootstrap, std::size_t workers = 1) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < 10) throw std::invalid_argument("cophenetic_bootstrap: need at least 10 rows");
  if (full_labels.size() != n) throw std::invalid_argument("cophenetic_bootstrap: labels and rows differ in length");
  if (b < 1) throw std::invalid_argument("cophenetic_bootstrap: B must be positive");

  // Per resample: the clustered label of each original row, -1 when absent.
  std::vector<std::vector<int>> assigned(static_cast<std::size_t>(b));
  parallel_for(assigned.size(), workers, [&](std::size_t r) {
    Rng rng(derive_seed(seed, "cophenetic/resample/" + std::to_string(r)));
    std::vector<std::size_t> idx(n);
    if (mode == Resample::identity) std::iota(idx.begin(), idx.end(), std::size_t{0});
    else for (auto& i : idx) i = rng.below(n);
    Matrix sub(static_cast<Eigen::Index>(n), x.cols());
    for (std::size_t i = 0; i < n; ++i) sub.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
    const Labels lab = clusterer(sub, derive_seed(seed, "cophenetic/cluster/" + std::to_string(r)));
    auto& out = assigned[r];
    out.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
      if (out[idx[i]] < 0) out[idx[i]] = lab[i];
    }
  });

  const int min_obs = std::min(5, b);
  std::vector<double> a_vals, ahat_vals;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      int seen = 0, together = 0;
      for (const auto& lab : assigned) {
        if (lab[i] < 0 || lab[j] < 0) continue;
        ++seen;
        together += lab[i] == lab[j];
      }
      if (seen < min_obs) continue;
      a_vals.push_back(full_labels[i] == full_labels[j] ? 1.0 : 0.0);
      ahat_vals.push_back(static_cast<double>(together) / seen);
    }
  }
  if (a_vals.empty()) throw std::invalid_argument("cophenetic_bootstrap: no pair observed often enough");
  if (std::all_of(a_vals.begin(), a_vals.end(), [&](double v) { return v == a_vals.front(); })) {
    throw std::invalid_argument("cophenetic_bootstrap: full-data co-assignment is constant");
  }
  return pearson(a_vals, ahat_vals);
}

/// Classical cophenetic correlation of a divisive split tree: the cophenetic
/// distance of two rows is the heterogeneity at their lowest common split.
inline double cophenetic_dendrogram(const Matrix& x, const ClusterModel& model) {
  if (model.method != ClusterMethod::divisive || model.split_tree.empty()) {
    throw std::invalid_argument("cophenetic_dendrogram: model has no split tree");
  }
  std::vector<int> leaf_of_label(static_cast<std::size_t>(model.k), -1);
  for (const auto& node : model.split_tree) {
    if (node.is_leaf() && node.label >= 0) leaf_of_label[static_cast<std::size_t>(node.label)] = node.id;
  }
  auto path = [&](int node) {
    std::vector<int> p;
    for (; node >= 0; node = model.split_tree[static_cast<std::size_t>(node)].parent) p.push_back(node);
    std::reverse(p.begin(), p.end());
    return p;
  };
  std::vector<std::vector<int>> paths(static_cast<std::size_t>(model.k));
  for (int c = 0; c < model.k; ++c) paths[static_cast<std::size_t>(c)] = path(leaf_of_label[static_cast<std::size_t>(c)]);

  std::vector<double> coph, dist;
  const auto n = static_cast<std::size_t>(x.rows());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int li = model.labels[i], lj = model.labels[j];
      double h = 0.0;
      if (li != lj) {
        const auto& pi = paths[static_cast<std::size_t>(li)];
        const auto& pj = paths[static_cast<std::size_t>(lj)];
        std::size_t d = 0;
        while (d + 1 < pi.size() && d + 1 < pj.size() && pi[d + 1] == pj[d + 1]) ++d;
        h = model.split_tree[static_cast<std::size_t>(pi[d])].heterogeneity;
      }
      coph.push_back(h);
      dist.push_back((x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).norm());
    }
  }
  return pearson(coph, dist);
}

// ---------------------------------------------------------------------------
// Report.

inline constexpr int kReportSchemaVersion = 1;

struct EvaluationReport {
  std::string method;
  int k = 0;
  std::uint64_t seed = 0;
  std::optional<double> nmi, ari, purity, mi_score;
  std::optional<double> silhouette, davies_bouldin, cophenetic, cophenetic_dendrogram;
  double balance = 0.0;
  double normalized_balance = 1.0;
};

inline nlohmann::ordered_json to_json(const EvaluationReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["method"] = r.method;
  j["k"] = r.k;
  j["seed"] = r.seed;
  j["external"] = {{"nmi", opt(r.nmi)}, {"ari", opt(r.ari)}, {"purity", opt(r.purity)}, {"mi_score", opt(r.mi_score)}};
  j["internal"] = {{"silhouette", opt(r.silhouette)},
                   {"davies_bouldin", opt(r.davies_bouldin)},
                   {"cophenetic", opt(r.cophenetic)},
                   {"cophenetic_dendrogram", opt(r.cophenetic_dendrogram)}};
  j["distribution"] = {{"balance", r.balance}, {"normalized_balance", r.normalized_balance}};
  return j;
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
  if (j.at("schema_version").get<int>() != kReportSchemaVersion) throw std::invalid_argument("report: unsupported schema_version");
  auto opt = [](const nlohmann::json& v) -> std::optional<double> {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };
  EvaluationReport r;
  r.method = j.at("method").get<std::string>();
  r.k = j.at("k").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  const auto& e = j.at("external");
  r.nmi = opt(e.at("nmi"));
  r.ari = opt(e.at("ari"));
  r.purity = opt(e.at("purity"));
  r.mi_score = opt(e.at("mi_score"));
  const auto& in = j.at("internal");
  r.silhouette = opt(in.at("silhouette"));
  r.davies_bouldin = opt(in.at("davies_bouldin"));
  r.cophenetic = opt(in.at("cophenetic"));
  r.cophenetic_dendrogram = opt(in.at("cophenetic_dendrogram"));
  r.balance = j.at("distribution").at("balance").get<double>();
  r.normalized_balance = j.at("distribution").at("normalized_balance").get<double>();
  return r;
}

struct EvaluationOptions {
  int bootstrap_rounds = 50;
  std::size_t workers = 1;
  /// Skips the bootstrap (costly on large inputs); reported as null.
  bool skip_cophenetic = false;
};

/// Every metric for one clustering. Truth may be empty, in which case the
/// external block is null; internal indices are null when k < 2 or k >= n.
inline EvaluationReport evaluate_all(const Matrix& x, const ClusterModel& model, std::span<const int> truth, const Clusterer& clusterer,
                                     const EvaluationOptions& options = {}) {
  if (static_cast<std::size_t>(x.rows()) != model.labels.size()) throw std::invalid_argument("evaluate_all: labels and rows differ in length");
  EvaluationReport r;
  r.method = std::string(to_string(model.method));
  r.k = count_clusters(model.labels);
  r.seed = model.seed;
  if (!truth.empty()) {
    r.nmi = nmi(model.labels, truth);
    r.ari = ari(model.labels, truth);
    r.purity = purity(model.labels, truth);
    r.mi_score = mi_score(model.labels, truth);
  }
  if (r.k >= 2 && r.k < x.rows()) {
    r.silhouette = silhouette(x, model.labels, options.workers);
    r.davies_bouldin = davies_bouldin(x, model.labels);
    if (!options.skip_cophenetic && x.rows() >= 10) {
      // Too few rounds for the pair count can leave nothing to correlate;
      // report null rather than sink the whole run.
      try {
        r.cophenetic = cophenetic_bootstrap(x, model.labels, clusterer, options.bootstrap_rounds, derive_seed(model.seed, "cophenetic"),
                                            Resample::bootstrap, options.workers);
      } catch (const std::invalid_argument& e) {
        spdlog::warn("evaluate: cophenetic left null ({})", e.what());
      }
    }
    if (model.method == ClusterMethod::divisive) r.cophenetic_dendrogram = cophenetic_dendrogram(x, model);
  }
  const Balance b = balance_metrics(model.labels);
  r.balance = b.balance;
  r.normalized_balance = b.normalized;
  return r;
}

// ---------------------------------------------------------------------------
// Cluster profiles.

inline constexpr std::array<std::string_view, 6> kProfileDimensions = {"Energy", "Danceability", "Tempo", "Harmonic", "Rhythmic", "Electronic"};

/// A column goes to the dimension of the first rule it matches. A rule matches
/// by group tag or by case-insensitive name substring.
struct ProfileRule {
  std::string dimension;
  enum class Kind { group, name } kind = Kind::name;
  std::string pattern;
};

inline std::vector<ProfileRule> default_profile_rules() {
  using K = ProfileRule::Kind;
  return {
      {"Rhythmic", K::group, "tempogram"},
      {"Tempo", K::name, "bpm"},
      {"Tempo", K::name, "tempo"},
      {"Energy", K::name, "rms"},
      {"Energy", K::name, "loud"},
      {"Energy", K::name, "amplitude"},
      {"Energy", K::name, "energy"},
      {"Energy", K::name, "mfcc0_"},
      {"Danceability", K::name, "dance"},
      {"Danceability", K::name, "dfa"},
      {"Danceability", K::name, "groove"},
      {"Danceability", K::name, "beat_strength"},
      {"Danceability", K::name, "beat_emphasis"},
      {"Harmonic", K::group, "harmonic"},
      {"Harmonic", K::name, "chroma"},
      {"Harmonic", K::name, "tonnetz"},
      {"Harmonic", K::name, "pitch"},
      {"Rhythmic", K::name, "onset"},
      {"Rhythmic", K::name, "percuss"},
      {"Rhythmic", K::name, "beat"},
      {"Rhythmic", K::group, "rhythmic"},
      {"Electronic", K::group, "spectral"},
      {"Electronic", K::group, "timbral"},
      {"Electronic", K::name, "mfcc"},
      {"Electronic", K::name, "spectral"},
  };
}

inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

/// Mapping file: CSV with header `dimension,kind,pattern`, kind being `group` or `name`.
inline std::vector<ProfileRule> load_profile_rules(const std::filesystem::path& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw TableError(path.string() + ": empty mapping file");
  std::vector<ProfileRule> rules;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].starts_with('#')) continue;
    const auto f = csv::split(lines[i]);
    if (f.size() != 3) throw TableError(path.string() + ": line " + std::to_string(i + 1) + " needs 3 fields");
    if (std::find(kProfileDimensions.begin(), kProfileDimensions.end(), f[0]) == kProfileDimensions.end()) {
      throw TableError(path.string() + ": unknown dimension '" + f[0] + "'");
    }
    ProfileRule r;
    r.dimension = f[0];
    if (f[1] == "group") r.kind = ProfileRule::Kind::group;
    else if (f[1] == "name") r.kind = ProfileRule::Kind::name;
    else throw TableError(path.string() + ": unknown rule kind '" + f[1] + "'");
    r.pattern = lowercase(f[2]);
    rules.push_back(std::move(r));
  }
  return rules;
}

inline std::string profile_rules_to_csv(const std::vector<ProfileRule>& rules) {
  std::string out = "dimension,kind,pattern\n";
  for (const auto& r : rules) out += r.dimension + "," + (r.kind == ProfileRule::Kind::group ? "group" : "name") + "," + r.pattern + "\n";
  return out;
}

inline std::optional<std::string> profile_dimension(const std::string& column, FeatureGroup group, const std::vector<ProfileRule>& rules) {
  const std::string lower = lowercase(column);
  for (const auto& r : rules) {
    const bool hit = r.kind == ProfileRule::Kind::group ? to_string(group) == r.pattern : lower.find(r.pattern) != std::string::npos;
    if (hit) return r.dimension;
  }
  return std::nullopt;
}

struct ClusterProfile {
  int cluster = 0;
  std::size_t size = 0;
  /// Percentile per dimension, absent when no column maps to it.
  std::array<std::optional<double>, 6> percentiles;
  double purity = 0.0;
  std::string majority_genre;
};

/// Mid-rank percentiles of `values` across clusters: 100 (rank - 1) / (K - 1),
/// ties share their average rank; a single cluster scores 50.
inline std::vector<double> midrank_percentiles(const std::vector<double>& values) {
  const std::size_t k = values.size();
  std::vector<double> out(k, 50.0);
  if (k < 2) return out;
  for (std::size_t i = 0; i < k; ++i) {
    double below = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (values[j] < values[i]) below += 1.0;
      else if (values[j] == values[i]) equal += 1.0;
    }
    const double rank = below + (equal + 1.0) / 2.0;
    out[i] = 100.0 * (rank - 1.0) / static_cast<double>(k - 1);
  }
  return out;
}

/// Columns are z-scored, averaged within each dimension per cluster, and the
/// cluster means converted to percentile ranks. `genres` may be empty.
inline std::vector<ClusterProfile> cluster_profiles(const FeatureMatrix& m, std::span<const int> labels, const std::vector<std::string>& genres,
                                                    const std::vector<ProfileRule>& rules = default_profile_rules()) {
  if (labels.size() != static_cast<std::size_t>(m.n_rows())) throw std::invalid_argument("cluster_profiles: labels and rows differ in length");
  if (!genres.empty() && genres.size() != labels.size()) throw std::invalid_argument("cluster_profiles: genres and rows differ in length");
  std::vector<int> lab;
  const int k = compact_labels(labels, lab);
  const auto n = static_cast<double>(labels.size());

  std::array<std::vector<Eigen::Index>, 6> members;
  for (Eigen::Index j = 0; j < m.n_cols(); ++j) {
    const auto dim = profile_dimension(m.cols[static_cast<std::size_t>(j)], m.groups[static_cast<std::size_t>(j)], rules);
    if (!dim) continue;
    const auto at = std::find(kProfileDimensions.begin(), kProfileDimensions.end(), *dim) - kProfileDimensions.begin();
    members[static_cast<std::size_t>(at)].push_back(j);
  }

  Matrix z = m.data;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double mu = z.col(j).mean();
    const double sd = std::sqrt((z.col(j).array() - mu).square().sum() / n);
    if (sd > 0.0) z.col(j) = (z.col(j).array() - mu) / sd;
    else z.col(j).setZero();
  }

  std::vector<ClusterProfile> out(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < lab.size(); ++i) ++out[static_cast<std::size_t>(lab[i])].size;
  for (int c = 0; c < k; ++c) out[static_cast<std::size_t>(c)].cluster = c;

  for (std::size_t d = 0; d < kProfileDimensions.size(); ++d) {
    if (members[d].empty()) {
      spdlog::warn("cluster_profiles: no column maps to {}; dimension reported absent", kProfileDimensions[d]);
      continue;
    }
    std::vector<double> means(static_cast<std::size_t>(k), 0.0);
    for (std::size_t i = 0; i < lab.size(); ++i) {
      double row = 0.0;
      for (Eigen::Index j : members[d]) row += z(static_cast<Eigen::Index>(i), j);
      means[static_cast<std::size_t>(lab[i])] += row / static_cast<double>(members[d].size());
    }
    for (int c = 0; c < k; ++c) means[static_cast<std::size_t>(c)] /= static_cast<double>(out[static_cast<std::size_t>(c)].size);
    const auto pct = midrank_percentiles(means);
    for (int c = 0; c < k; ++c) out[static_cast<std::size_t>(c)].percentiles[d] = pct[static_cast<std::size_t>(c)];
  }

  if (!genres.empty()) {
    for (int c = 0; c < k; ++c) {
      std::map<std::string, std::size_t> counts;
      for (std::size_t i = 0; i < lab.size(); ++i) {
        if (lab[i] == c) ++counts[genres[i]];
      }
      // Ties go to the alphabetically first genre.
      std::size_t best = 0;
      for (const auto& [g, cnt] : counts) {
        if (cnt > best) {
          best = cnt;
          out[static_cast<std::size_t>(c)].majority_genre = g;
        }
      }
      out[static_cast<std::size_t>(c)].purity = static_cast<double>(best) / static_cast<double>(out[static_cast<std::size_t>(c)].size);
    }
  }
  return out;
}

inline constexpr int kProfileSchemaVersion = 1;

inline std::string profiles_to_csv(const std::vector<ClusterProfile>& profiles) {
  std::string out = "schema_version,cluster,size";
  for (auto d : kProfileDimensions) out += "," + std::string(d);
  out += ",purity,majority_genre\n";
  for (const auto& p : profiles) {
    out += std::to_string(kProfileSchemaVersion) + "," + std::to_string(p.cluster) + "," + std::to_string(p.size);
    for (const auto& v : p.percentiles) out += "," + (v ? csv::format_double(*v) : std::string());
    out += "," + csv::format_double(p.purity) + "," + csv::quote(p.majority_genre) + "\n";
  }
  return out;
}

}  // namespace edm_atlas

#endif  // EDM_ATLAS_METRICS_HPP
