#ifndef EDM_ATLAS_CLUSTERING_HPP
#define EDM_ATLAS_CLUSTERING_HPP

// k-means++ with restarts, heterogeneity-driven divisive clustering, and
// cluster-count selection by a weighted consensus of validity curves.

#include "edm_atlas/cluster_indices.hpp"
#include "edm_atlas/common.hpp"

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace edm_atlas {

enum class ClusterMethod { kmeans, divisive };

inline constexpr std::string_view to_string(ClusterMethod m) { return m == ClusterMethod::kmeans ? "kmeans" : "divisive"; }

/// One node of a divisive split tree. Leaves carry the final cluster label;
/// internal nodes carry the heterogeneity that triggered their split.
struct SplitNode {
  int id = 0;
  int parent = -1;
  int left = -1;
  int right = -1;
  std::size_t size = 0;
  double heterogeneity = 0.0;
  int label = -1;

  bool is_leaf() const { return left < 0; }
};

struct ClusterModel {
  Labels labels;
  int k = 0;
  Matrix centroids;
  double inertia = 0.0;
  ClusterMethod method = ClusterMethod::kmeans;
  std::vector<SplitNode> split_tree;
  std::uint64_t seed = 0;
  /// False when divisive clustering stopped before reaching its target.
  bool reached_target = true;
};

inline constexpr int kDefaultRestarts = 50;
inline constexpr int kMaxLloydIterations = 300;
inline constexpr double kCentroidTolerance = 1e-6;

namespace detail {

/// n x k squared distances.
inline Matrix squared_distances(const Matrix& x, const Matrix& centroids) {
  const Eigen::VectorXd xn = x.rowwise().squaredNorm();
  const Eigen::RowVectorXd cn = centroids.rowwise().squaredNorm().transpose();
  Matrix d = (-2.0 * x * centroids.transpose()).rowwise() + cn;
  d.colwise() += xn;
  return d.cwiseMax(0.0);
}

inline Matrix centroids_of(const Matrix& x, const Labels& labels, int k) {
  std::vector<std::size_t> sizes;
  return cluster_means(x, labels, k, sizes);
}

inline double inertia_of(const Matrix& x, const Labels& labels, const Matrix& centroids) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) acc += (x.row(i) - centroids.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
  return acc;
}

}  // namespace detail

/// k-means++ seeding: first center uniform, the rest drawn with probability
/// proportional to squared distance from the nearest chosen center.
inline Matrix kmeans_plus_plus(const Matrix& x, int k, Rng& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  Matrix centers(k, x.cols());
  std::vector<char> chosen(n, 0);
  std::size_t first = rng.below(n);
  centers.row(0) = x.row(static_cast<Eigen::Index>(first));
  chosen[first] = 1;
  Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    std::size_t pick = n;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        target -= d2(static_cast<Eigen::Index>(i));
        if (target < 0.0 && d2(static_cast<Eigen::Index>(i)) > 0.0) {
          pick = i;
          break;
        }
      }
      if (pick == n) {
        for (std::size_t i = n; i-- > 0;) {
          if (d2(static_cast<Eigen::Index>(i)) > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      // Every point coincides with a center already; take an unused row.
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) free.push_back(i);
      }
      pick = free.empty() ? rng.below(n) : free[rng.below(free.size())];
    }
    chosen[pick] = 1;
    centers.row(c) = x.row(static_cast<Eigen::Index>(pick));
    d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

/// One seeded k-means++ / Lloyd run. When `trace` is given it receives the
/// inertia after every assignment step.
inline ClusterModel kmeans_single(const Matrix& x, int k, std::uint64_t seed, std::vector<double>* trace = nullptr) {
  const auto n = static_cast<std::size_t>(x.rows());
  Rng rng(seed);
  Matrix centers = kmeans_plus_plus(x, k, rng);
  Labels labels(n, 0);
  std::vector<double> best_d2(n, 0.0);

  auto assign = [&] {
    const Matrix d = detail::squared_distances(x, centers);
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Index arg = 0;
      best_d2[i] = d.row(static_cast<Eigen::Index>(i)).minCoeff(&arg);
      labels[i] = static_cast<int>(arg);
      inertia += best_d2[i];
    }
    return inertia;
  };

  for (int iter = 0; iter < kMaxLloydIterations; ++iter) {
    const double inertia = assign();
    if (trace) trace->push_back(inertia);

    // Repair empty clusters with the point farthest from its centroid.
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[static_cast<std::size_t>(labels[i])] < 2) continue;
        if (far == n || best_d2[i] > best_d2[far]) far = i;
      }
      if (far == n) break;
      --sizes[static_cast<std::size_t>(labels[far])];
      labels[far] = c;
      sizes[static_cast<std::size_t>(c)] = 1;
      best_d2[far] = 0.0;
    }

    Matrix updated = Matrix::Zero(k, x.cols());
    for (std::size_t i = 0; i < n; ++i) updated.row(labels[i]) += x.row(static_cast<Eigen::Index>(i));
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) updated.row(c) /= static_cast<double>(sizes[static_cast<std::size_t>(c)]);
      else updated.row(c) = centers.row(c);
    }
    const double shift = (updated - centers).rowwise().norm().maxCoeff();
    centers = std::move(updated);
    if (shift < kCentroidTolerance) break;
  }
  const double final_inertia = assign();
  if (trace) trace->push_back(final_inertia);

  ClusterModel model;
  model.method = ClusterMethod::kmeans;
  model.k = k;
  model.seed = seed;
  model.labels = std::move(labels);
  // Clusters emptied by the last assignment keep their previous centroid.
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (int l : model.labels) ++sizes[static_cast<std::size_t>(l)];
  model.centroids = Matrix::Zero(k, x.cols());
  for (std::size_t i = 0; i < n; ++i) model.centroids.row(model.labels[i]) += x.row(static_cast<Eigen::Index>(i));
  for (int c = 0; c < k; ++c) {
    if (sizes[static_cast<std::size_t>(c)] > 0) model.centroids.row(c) /= static_cast<double>(sizes[static_cast<std::size_t>(c)]);
    else model.centroids.row(c) = centers.row(c);
  }
  model.inertia = detail::inertia_of(x, model.labels, model.centroids);
  return model;
}

/// Best of `restarts` seeded k-means++ runs by inertia (lowest restart index on
/// ties). Deterministic for a given seed regardless of `workers`.
inline ClusterModel kmeans(const Matrix& x, int k, int restarts = kDefaultRestarts, std::uint64_t seed = 0, std::size_t workers = 1) {
  if (k < 2) throw std::invalid_argument("kmeans: k must be at least 2");
  if (k > x.rows()) throw std::invalid_argument("kmeans: k exceeds the number of rows");
  if (restarts < 1) throw std::invalid_argument("kmeans: restarts must be positive");
  if (!x.allFinite()) throw std::invalid_argument("kmeans: non-finite input");
  std::vector<ClusterModel> runs(static_cast<std::size_t>(restarts));
  parallel_for(runs.size(), workers, [&](std::size_t r) { runs[r] = kmeans_single(x, k, derive_seed(seed, r)); });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].inertia < runs[best].inertia) best = r;
  }
  ClusterModel model = std::move(runs[best]);
  model.seed = seed;
  return model;
}

// ---------------------------------------------------------------------------
// Heterogeneity and divisive clustering.

inline constexpr int kHeterogeneityRestarts = 5;
inline constexpr int kSplitRestarts = 10;

/// Factors of H(C) = variance * (1 + split silhouette) * ln(|C| + 1).
struct HeterogeneityTerms {
  double variance = 0.0;
  double split_silhouette = 0.0;
  double log_size = 0.0;
  double score = 0.0;
  Labels split_labels;
};

/// Variance is the mean squared distance to the centroid; the silhouette is that
/// of a tentative seeded 2-means split. Clusters with fewer than 4 rows or no
/// spread score 0.
inline HeterogeneityTerms heterogeneity_terms(const Matrix& rows, std::uint64_t seed) {
  HeterogeneityTerms h;
  const auto n = rows.rows();
  if (n < 1) return h;
  h.log_size = std::log(static_cast<double>(n) + 1.0);
  const Eigen::RowVectorXd centroid = rows.colwise().mean();
  h.variance = (rows.rowwise() - centroid).rowwise().squaredNorm().mean();
  if (n < 4 || h.variance <= 0.0) return h;
  const ClusterModel split = kmeans(rows, 2, kHeterogeneityRestarts, seed);
  h.split_labels = split.labels;
  h.split_silhouette = silhouette(rows, split.labels);
  h.score = h.variance * (1.0 + h.split_silhouette) * h.log_size;
  return h;
}

inline double heterogeneity(const Matrix& rows, std::uint64_t seed = 0) { return heterogeneity_terms(rows, seed).score; }

struct DivisiveOptions {
  /// Stop once the largest heterogeneity falls below this value.
  std::optional<double> min_heterogeneity;
};

/// Top-down clustering: repeatedly split the cluster with the largest
/// heterogeneity (ties: larger cluster, then lower node id) by seeded 2-means
/// until k_target clusters exist or every cluster scores 0.
inline ClusterModel divisive_cluster(const Matrix& x, int k_target, std::uint64_t seed = 0, const DivisiveOptions& options = {}) {
  if (k_target < 2) throw std::invalid_argument("divisive_cluster: k_target must be at least 2");
  if (k_target > x.rows()) throw std::invalid_argument("divisive_cluster: k_target exceeds the number of rows");
  if (!x.allFinite()) throw std::invalid_argument("divisive_cluster: non-finite input");

  struct Leaf {
    int node;
    std::vector<Eigen::Index> members;
    double h;
  };
  auto rows_of = [&](const std::vector<Eigen::Index>& members) {
    Matrix sub(static_cast<Eigen::Index>(members.size()), x.cols());
    for (std::size_t i = 0; i < members.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = x.row(members[i]);
    return sub;
  };
  auto score = [&](int node, const std::vector<Eigen::Index>& members) {
    return heterogeneity(rows_of(members), derive_seed(seed, "heterogeneity/" + std::to_string(node)));
  };

  ClusterModel model;
  model.method = ClusterMethod::divisive;
  model.seed = seed;
  std::vector<Eigen::Index> all(static_cast<std::size_t>(x.rows()));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  model.split_tree.push_back(SplitNode{0, -1, -1, -1, all.size(), 0.0, -1});
  std::vector<Leaf> leaves{{0, all, score(0, all)}};

  while (static_cast<int>(leaves.size()) < k_target) {
    std::size_t pick = 0;
    for (std::size_t i = 1; i < leaves.size(); ++i) {
      const Leaf& a = leaves[i];
      const Leaf& b = leaves[pick];
      if (a.h > b.h || (a.h == b.h && (a.members.size() > b.members.size() || (a.members.size() == b.members.size() && a.node < b.node)))) {
        pick = i;
      }
    }
    if (leaves[pick].h <= 0.0) {
      spdlog::warn("divisive_cluster: every cluster has zero heterogeneity; stopping at k = {} (target {})", leaves.size(), k_target);
      model.reached_target = false;
      break;
    }
    if (options.min_heterogeneity && leaves[pick].h < *options.min_heterogeneity) {
      model.reached_target = false;
      break;
    }

    Leaf parent = std::move(leaves[pick]);
    leaves.erase(leaves.begin() + static_cast<std::ptrdiff_t>(pick));
    const ClusterModel split = kmeans(rows_of(parent.members), 2, kSplitRestarts, derive_seed(seed, "split/" + std::to_string(parent.node)));
    std::vector<Eigen::Index> left, right;
    for (std::size_t i = 0; i < parent.members.size(); ++i) (split.labels[i] == 0 ? left : right).push_back(parent.members[i]);

    const int left_id = static_cast<int>(model.split_tree.size());
    const int right_id = left_id + 1;
    model.split_tree[static_cast<std::size_t>(parent.node)].left = left_id;
    model.split_tree[static_cast<std::size_t>(parent.node)].right = right_id;
    model.split_tree[static_cast<std::size_t>(parent.node)].heterogeneity = parent.h;
    model.split_tree.push_back(SplitNode{left_id, parent.node, -1, -1, left.size(), 0.0, -1});
    model.split_tree.push_back(SplitNode{right_id, parent.node, -1, -1, right.size(), 0.0, -1});
    const double h_left = score(left_id, left);
    const double h_right = score(right_id, right);
    leaves.push_back({left_id, std::move(left), h_left});
    leaves.push_back({right_id, std::move(right), h_right});
  }

  // Labels follow the smallest member index of each leaf.
  std::sort(leaves.begin(), leaves.end(), [](const Leaf& a, const Leaf& b) { return a.members.front() < b.members.front(); });
  model.k = static_cast<int>(leaves.size());
  model.labels.assign(static_cast<std::size_t>(x.rows()), 0);
  for (std::size_t c = 0; c < leaves.size(); ++c) {
    for (Eigen::Index i : leaves[c].members) model.labels[static_cast<std::size_t>(i)] = static_cast<int>(c);
    model.split_tree[static_cast<std::size_t>(leaves[c].node)].label = static_cast<int>(c);
    model.split_tree[static_cast<std::size_t>(leaves[c].node)].heterogeneity = leaves[c].h;
  }
  model.centroids = detail::centroids_of(x, model.labels, model.k);
  model.inertia = detail::inertia_of(x, model.labels, model.centroids);
  return model;
}

// ---------------------------------------------------------------------------
// Natural cluster count.

struct ConsensusWeights {
  double silhouette = 0.5;
  double calinski_harabasz = 0.3;
  double elbow = 0.2;
};

struct KSweepRow {
  int k = 0;
  double silhouette = 0.0;
  double calinski_harabasz = 0.0;
  double inertia = 0.0;
  double elbow = 0.0;
  double silhouette_norm = 0.0;
  double calinski_harabasz_norm = 0.0;
  double elbow_norm = 0.0;
  double consensus = 0.0;
};

struct KSweepResult {
  std::vector<KSweepRow> rows;
  int chosen_k = 0;
};

namespace detail {

/// Min-max scaling to [0, 1]; a flat curve maps to zeros. Infinite values are
/// treated as the maximum.
inline std::vector<double> min_max(std::vector<double> v) {
  double finite_max = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (std::isfinite(x)) finite_max = std::max(finite_max, x);
  }
  for (double& x : v) {
    if (!std::isfinite(x)) x = std::isfinite(finite_max) ? 2.0 * std::abs(finite_max) + 1.0 : 1.0;
  }
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a = *lo, b = *hi;
  for (double& x : v) x = b > a ? (x - a) / (b - a) : 0.0;
  return v;
}

/// Distance of each (k, inertia) point from the chord joining the curve's end
/// points, both axes scaled to [0, 1].
inline std::vector<double> elbow_distances(const std::vector<int>& ks, const std::vector<double>& inertia) {
  const double k0 = ks.front(), k1 = ks.back();
  const auto [lo, hi] = std::minmax_element(inertia.begin(), inertia.end());
  const double span = *hi - *lo;
  std::vector<double> out(ks.size(), 0.0);
  if (span <= 0.0 || k1 <= k0) return out;
  auto y = [&](std::size_t i) { return (inertia[i] - *lo) / span; };
  const double y0 = y(0), y1 = y(ks.size() - 1);
  const double len = std::hypot(1.0, y1 - y0);
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const double xi = (ks[i] - k0) / (k1 - k0);
    out[i] = std::abs((y1 - y0) * xi - (y(i) - y0)) / len;
  }
  return out;
}

}  // namespace detail

/// Sweeps k over [k_min, k_max]; consensus is the weighted sum of the min-max
/// scaled silhouette, Calinski-Harabasz and elbow curves. Ties pick the smaller k.
inline KSweepResult select_natural_k(const Matrix& x, int k_min, int k_max, std::uint64_t seed = 0, int restarts = kDefaultRestarts,
                                     const ConsensusWeights& weights = {}, std::size_t workers = 1) {
  if (k_min < 2 || k_max <= k_min || k_max >= x.rows()) {
    throw std::invalid_argument("select_natural_k: need 2 <= k_min < k_max < n (got [" + std::to_string(k_min) + ", " +
                                std::to_string(k_max) + "] for n = " + std::to_string(x.rows()) + ")");
  }
  KSweepResult result;
  result.rows.resize(static_cast<std::size_t>(k_max - k_min + 1));
  parallel_for(result.rows.size(), workers, [&](std::size_t i) {
    const int k = k_min + static_cast<int>(i);
    const ClusterModel m = kmeans(x, k, restarts, derive_seed(seed, static_cast<std::uint64_t>(k)));
    KSweepRow& row = result.rows[i];
    row.k = k;
    row.inertia = m.inertia;
    row.silhouette = silhouette(x, m.labels);
    row.calinski_harabasz = calinski_harabasz(x, m.labels);
  });

  std::vector<int> ks;
  std::vector<double> sil, ch, inertia;
  for (const auto& r : result.rows) {
    ks.push_back(r.k);
    sil.push_back(r.silhouette);
    ch.push_back(r.calinski_harabasz);
    inertia.push_back(r.inertia);
  }
  const auto elbow = detail::elbow_distances(ks, inertia);
  const auto sil_n = detail::min_max(sil);
  const auto ch_n = detail::min_max(ch);
  const auto elbow_n = detail::min_max(elbow);
  std::size_t best = 0;
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    KSweepRow& r = result.rows[i];
    r.elbow = elbow[i];
    r.silhouette_norm = sil_n[i];
    r.calinski_harabasz_norm = ch_n[i];
    r.elbow_norm = elbow_n[i];
    r.consensus = weights.silhouette * sil_n[i] + weights.calinski_harabasz * ch_n[i] + weights.elbow * elbow_n[i];
    if (r.consensus > result.rows[best].consensus) best = i;
  }
  result.chosen_k = result.rows[best].k;
  return result;
}

}  // namespace edm_atlas

#endif  // EDM_ATLAS_CLUSTERING_HPP
