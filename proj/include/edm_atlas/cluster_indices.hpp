#ifndef EDM_ATLAS_CLUSTER_INDICES_HPP
#define EDM_ATLAS_CLUSTER_INDICES_HPP

// Internal validity indices over Euclidean geometry: silhouette,
// Calinski-Harabasz and Davies-Bouldin.

#include "edm_atlas/common.hpp"

#include <limits>
#include <map>
#include <vector>

namespace edm_atlas {

using Labels = std::vector<int>;

/// Relabels to 0..k-1 in order of first appearance; returns k.
inline int compact_labels(std::span<const int> labels, std::vector<int>& out) {
  std::map<int, int> ids;
  out.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = ids.emplace(labels[i], static_cast<int>(ids.size()));
    out[i] = it->second;
  }
  return static_cast<int>(ids.size());
}

inline int count_clusters(std::span<const int> labels) {
  std::vector<int> tmp;
  return compact_labels(labels, tmp);
}

namespace detail {

inline void check_rows(const Matrix& x, std::span<const int> labels, const char* who) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw std::invalid_argument(std::string(who) + ": labels and rows differ in length");
}

inline Matrix cluster_means(const Matrix& x, std::span<const int> compact, int k, std::vector<std::size_t>& sizes) {
  Matrix c = Matrix::Zero(k, x.cols());
  sizes.assign(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    c.row(compact[static_cast<std::size_t>(i)]) += x.row(i);
    ++sizes[static_cast<std::size_t>(compact[static_cast<std::size_t>(i)])];
  }
  for (int j = 0; j < k; ++j) c.row(j) /= static_cast<double>(sizes[static_cast<std::size_t>(j)]);
  return c;
}

}  // namespace detail

/// Per-sample silhouette (b - a) / max(a, b); members of singleton clusters get 0.
inline std::vector<double> silhouette_samples(const Matrix& x, std::span<const int> labels, std::size_t workers = 1) {
  detail::check_rows(x, labels, "silhouette");
  std::vector<int> lab;
  const int k = compact_labels(labels, lab);
  const auto n = static_cast<std::size_t>(x.rows());
  if (k < 2 || static_cast<std::size_t>(k) >= n) throw std::invalid_argument("silhouette: need 2 <= k < n");
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (int l : lab) ++sizes[static_cast<std::size_t>(l)];

  std::vector<double> s(n, 0.0);
  parallel_for(n, workers, [&](std::size_t i) {
    const int own = lab[i];
    if (sizes[static_cast<std::size_t>(own)] < 2) return;
    const Eigen::VectorXd d = (x.rowwise() - x.row(static_cast<Eigen::Index>(i))).rowwise().norm();
    std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
    for (std::size_t j = 0; j < n; ++j) sum[static_cast<std::size_t>(lab[j])] += d(static_cast<Eigen::Index>(j));
    const double a = sum[static_cast<std::size_t>(own)] / static_cast<double>(sizes[static_cast<std::size_t>(own)] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c != own) b = std::min(b, sum[static_cast<std::size_t>(c)] / static_cast<double>(sizes[static_cast<std::size_t>(c)]));
    }
    const double denom = std::max(a, b);
    s[i] = denom > 0.0 ? (b - a) / denom : 0.0;
  });
  return s;
}

inline double silhouette(const Matrix& x, std::span<const int> labels, std::size_t workers = 1) {
  return mean_of(silhouette_samples(x, labels, workers));
}

/// Between/within dispersion ratio scaled by (n - k)/(k - 1). Returns +inf when
/// the within-cluster dispersion is zero and the between dispersion is not.
inline double calinski_harabasz(const Matrix& x, std::span<const int> labels) {
  detail::check_rows(x, labels, "calinski_harabasz");
  std::vector<int> lab;
  const int k = compact_labels(labels, lab);
  const auto n = static_cast<double>(x.rows());
  if (k < 2) throw std::invalid_argument("calinski_harabasz: need at least 2 clusters");
  std::vector<std::size_t> sizes;
  const Matrix centroids = detail::cluster_means(x, lab, k, sizes);
  const Eigen::RowVectorXd grand = x.colwise().mean();
  double between = 0.0, within = 0.0;
  for (int c = 0; c < k; ++c) between += static_cast<double>(sizes[static_cast<std::size_t>(c)]) * (centroids.row(c) - grand).squaredNorm();
  for (Eigen::Index i = 0; i < x.rows(); ++i) within += (x.row(i) - centroids.row(lab[static_cast<std::size_t>(i)])).squaredNorm();
  if (within <= 0.0) return between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  if (n <= k) return 0.0;
  return (between / (k - 1)) / (within / (n - k));
}

/// Mean over clusters of the worst (s_i + s_j) / d_ij ratio, where s is the mean
/// member-to-centroid distance and d the centroid separation. Pairs with
/// coincident centroids are skipped.
inline double davies_bouldin(const Matrix& x, std::span<const int> labels) {
  detail::check_rows(x, labels, "davies_bouldin");
  std::vector<int> lab;
  const int k = compact_labels(labels, lab);
  if (k < 2 || k >= x.rows()) throw std::invalid_argument("davies_bouldin: need 2 <= k < n");
  std::vector<std::size_t> sizes;
  const Matrix centroids = detail::cluster_means(x, lab, k, sizes);
  std::vector<double> scatter(static_cast<std::size_t>(k), 0.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int c = lab[static_cast<std::size_t>(i)];
    scatter[static_cast<std::size_t>(c)] += (x.row(i) - centroids.row(c)).norm();
  }
  for (int c = 0; c < k; ++c) scatter[static_cast<std::size_t>(c)] /= static_cast<double>(sizes[static_cast<std::size_t>(c)]);

  double total = 0.0;
  bool any_pair = false;
  for (int i = 0; i < k; ++i) {
    double worst = 0.0;
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      const double d = (centroids.row(i) - centroids.row(j)).norm();
      if (d <= 0.0) continue;
      any_pair = true;
      worst = std::max(worst, (scatter[static_cast<std::size_t>(i)] + scatter[static_cast<std::size_t>(j)]) / d);
    }
    total += worst;
  }
  if (!any_pair) throw std::invalid_argument("davies_bouldin: all cluster centroids coincide");
  return total / k;
}

}  // namespace edm_atlas

#endif  // EDM_ATLAS_CLUSTER_INDICES_HPP
