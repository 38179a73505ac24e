#ifndef EDM_ATLAS_FOREST_HPP
#define EDM_ATLAS_FOREST_HPP

// Gini classification trees grown as random forests or extremely randomized
// trees, used only for impurity-based feature importance.

#include "edm_atlas/common.hpp"

#include <string>
#include <vector>

namespace edm_atlas {

enum class ForestMode { random_forest, extra_trees };

struct ForestParams {
  int trees = 100;
  int max_depth = 12;
  int min_leaf = 2;
  /// Candidate thresholds per sampled feature in random_forest mode.
  int thresholds = 16;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

namespace detail {

inline double gini(const std::vector<double>& counts, double total) {
  if (total <= 0.0) return 0.0;
  double s = 0.0;
  for (double c : counts) s += (c / total) * (c / total);
  return 1.0 - s;
}

class TreeGrower {
 public:
  TreeGrower(const Matrix& x, std::span<const int> y, int classes, ForestMode mode, const ForestParams& p, std::uint64_t seed)
      : x_(x), y_(y), classes_(classes), mode_(mode), p_(p), rng_(seed), importance_(static_cast<std::size_t>(x.cols()), 0.0) {
    mtry_ = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::floor(std::sqrt(static_cast<double>(x.cols())))));
  }

  std::vector<double> grow() {
    const auto n = static_cast<std::size_t>(x_.rows());
    std::vector<std::size_t> rows(n);
    if (mode_ == ForestMode::random_forest) {
      for (auto& r : rows) r = rng_.below(n);
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    split(rows, 0);
    return importance_;
  }

 private:
  struct Best {
    Eigen::Index feature = -1;
    double threshold = 0.0;
    double decrease = 0.0;
  };

  std::vector<double> class_counts(const std::vector<std::size_t>& rows) const {
    std::vector<double> c(static_cast<std::size_t>(classes_), 0.0);
    for (auto r : rows) c[static_cast<std::size_t>(y_[r])] += 1.0;
    return c;
  }

  // Partial Fisher-Yates draw of mtry distinct features.
  std::vector<Eigen::Index> sample_features() {
    std::vector<Eigen::Index> f(static_cast<std::size_t>(x_.cols()));
    std::iota(f.begin(), f.end(), Eigen::Index{0});
    for (Eigen::Index i = 0; i < mtry_; ++i) {
      const std::size_t j = static_cast<std::size_t>(i) + rng_.below(f.size() - static_cast<std::size_t>(i));
      std::swap(f[static_cast<std::size_t>(i)], f[j]);
    }
    f.resize(static_cast<std::size_t>(mtry_));
    return f;
  }

  // Evaluates splits x <= t for sorted thresholds in one histogram pass.
  void score_thresholds(const std::vector<std::size_t>& rows, Eigen::Index feature, std::vector<double> thresholds, double parent_impurity,
                        const std::vector<double>& parent_counts, Best& best) const {
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    const std::size_t t = thresholds.size();
    std::vector<std::vector<double>> hist(t + 1, std::vector<double>(static_cast<std::size_t>(classes_), 0.0));
    for (auto r : rows) {
      const double v = x_(static_cast<Eigen::Index>(r), feature);
      const auto bucket = static_cast<std::size_t>(std::lower_bound(thresholds.begin(), thresholds.end(), v) - thresholds.begin());
      hist[bucket][static_cast<std::size_t>(y_[r])] += 1.0;
    }
    const double total = static_cast<double>(rows.size());
    std::vector<double> left(static_cast<std::size_t>(classes_), 0.0);
    double n_left = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      for (int c = 0; c < classes_; ++c) {
        left[static_cast<std::size_t>(c)] += hist[i][static_cast<std::size_t>(c)];
        n_left += hist[i][static_cast<std::size_t>(c)];
      }
      const double n_right = total - n_left;
      if (n_left < p_.min_leaf || n_right < p_.min_leaf) continue;
      std::vector<double> right(static_cast<std::size_t>(classes_));
      for (int c = 0; c < classes_; ++c) right[static_cast<std::size_t>(c)] = parent_counts[static_cast<std::size_t>(c)] - left[static_cast<std::size_t>(c)];
      const double dec = total * parent_impurity - n_left * gini(left, n_left) - n_right * gini(right, n_right);
      if (dec > best.decrease + 1e-12) best = {feature, thresholds[i], dec};
    }
  }

  void split(const std::vector<std::size_t>& rows, int depth) {
    if (depth >= p_.max_depth || rows.size() < 2 * static_cast<std::size_t>(p_.min_leaf)) return;
    const auto counts = class_counts(rows);
    const double impurity = gini(counts, static_cast<double>(rows.size()));
    if (impurity <= 0.0) return;

    Best best;
    for (Eigen::Index f : sample_features()) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (auto r : rows) {
        const double v = x_(static_cast<Eigen::Index>(r), f);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (!(hi > lo)) continue;
      std::vector<double> thresholds;
      if (mode_ == ForestMode::extra_trees) {
        double t = rng_.uniform(lo, hi);
        if (t >= hi) t = lo;
        thresholds.push_back(t);
      } else {
        // Values drawn from the node; x <= max would send everything left.
        for (int i = 0; i < p_.thresholds; ++i) {
          const double v = x_(static_cast<Eigen::Index>(rows[rng_.below(rows.size())]), f);
          if (v < hi) thresholds.push_back(v);
        }
        if (thresholds.empty()) continue;
      }
      score_thresholds(rows, f, std::move(thresholds), impurity, counts, best);
    }
    if (best.feature < 0) return;

    importance_[static_cast<std::size_t>(best.feature)] += best.decrease;
    std::vector<std::size_t> left, right;
    for (auto r : rows) (x_(static_cast<Eigen::Index>(r), best.feature) <= best.threshold ? left : right).push_back(r);
    split(left, depth + 1);
    split(right, depth + 1);
  }

  const Matrix& x_;
  std::span<const int> y_;
  int classes_;
  ForestMode mode_;
  const ForestParams& p_;
  Rng rng_;
  Eigen::Index mtry_ = 1;
  std::vector<double> importance_;
};

}  // namespace detail

/// Mean decrease in Gini impurity per column, normalized to sum 1. Labels must
/// be 0..C-1. All zeros when no tree found a split.
inline std::vector<double> forest_importance(const Matrix& x, std::span<const int> y, ForestMode mode, const ForestParams& params = {}) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw std::invalid_argument("forest_importance: labels and rows differ in length");
  if (x.rows() < 20) throw std::invalid_argument("forest_importance: need at least 20 rows");
  if (x.cols() < 1) throw std::invalid_argument("forest_importance: no columns");
  int classes = 0;
  for (int v : y) {
    if (v < 0) throw std::invalid_argument("forest_importance: negative label");
    classes = std::max(classes, v + 1);
  }
  std::vector<char> present(static_cast<std::size_t>(classes), 0);
  for (int v : y) present[static_cast<std::size_t>(v)] = 1;
  if (std::count(present.begin(), present.end(), 1) < 2) throw std::invalid_argument("forest_importance: need at least 2 classes");

  const std::string stage = mode == ForestMode::random_forest ? "forest/rf/" : "forest/et/";
  std::vector<std::vector<double>> per_tree(static_cast<std::size_t>(params.trees));
  parallel_for(per_tree.size(), params.workers, [&](std::size_t t) {
    detail::TreeGrower g(x, y, classes, mode, params, derive_seed(params.seed, stage + std::to_string(t)));
    per_tree[t] = g.grow();
  });

  std::vector<double> total(static_cast<std::size_t>(x.cols()), 0.0);
  for (const auto& imp : per_tree) {
    const double s = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (s <= 0.0) continue;
    for (std::size_t j = 0; j < imp.size(); ++j) total[j] += imp[j] / s;
  }
  const double s = std::accumulate(total.begin(), total.end(), 0.0);
  if (s > 0.0) {
    for (double& v : total) v /= s;
  }
  return total;
}

}  // namespace edm_atlas

#endif  // EDM_ATLAS_FOREST_HPP
