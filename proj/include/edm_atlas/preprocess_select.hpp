#ifndef EDM_ATLAS_PREPROCESS_SELECT_HPP
#define EDM_ATLAS_PREPROCESS_SELECT_HPP

// Feature engineering, three-way ensemble normalization, and weighted
// multi-criteria feature selection against genre labels.

#include "edm_atlas/cluster_indices.hpp"
#include "edm_atlas/feature_table.hpp"
#include "edm_atlas/forest.hpp"
#include "edm_atlas/metrics.hpp"

#include <array>
#include <limits>
#include <string>
#include <vector>

namespace edm_atlas {

/// Genre index per row plus the class names the indices refer to.
struct LabelVector {
  std::vector<int> labels;
  std::vector<std::string> class_names;
};

/// Classes are numbered in sorted name order so the encoding is stable.
inline LabelVector make_label_vector(const std::vector<std::string>& genres) {
  LabelVector lv;
  lv.class_names = genres;
  std::sort(lv.class_names.begin(), lv.class_names.end());
  lv.class_names.erase(std::unique(lv.class_names.begin(), lv.class_names.end()), lv.class_names.end());
  for (const auto& g : genres) {
    lv.labels.push_back(static_cast<int>(std::lower_bound(lv.class_names.begin(), lv.class_names.end(), g) - lv.class_names.begin()));
  }
  return lv;
}

namespace detail {

inline double column_variance(const Eigen::Ref<const Eigen::VectorXd>& c, double ddof = 0.0) {
  const auto n = static_cast<double>(c.size());
  if (n - ddof <= 0.0) return 0.0;
  return (c.array() - c.mean()).square().sum() / (n - ddof);
}

inline std::optional<double> skewness(const Eigen::Ref<const Eigen::VectorXd>& c) {
  const double var = column_variance(c);
  if (!(var > 0.0)) return std::nullopt;
  const double m3 = (c.array() - c.mean()).cube().mean();
  return m3 / std::pow(var, 1.5);
}

/// Indices of the `count` largest scores; ties keep the earlier column.
inline std::vector<Eigen::Index> top_indices(const std::vector<std::pair<double, Eigen::Index>>& scored, std::size_t count) {
  auto s = scored;
  std::stable_sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < std::min(count, s.size()); ++i) out.push_back(s[i].second);
  return out;
}

}  // namespace detail

inline constexpr std::size_t kSquareFamily = 20;
inline constexpr std::size_t kLogFamily = 20;
inline constexpr std::array<FeatureGroup, 5> kInteractionGroups = {FeatureGroup::spectral, FeatureGroup::timbral, FeatureGroup::harmonic,
                                                                     FeatureGroup::rhythmic, FeatureGroup::tempogram};

/// Appends squared, log-shifted and cross-group product columns, all tagged
/// `engineered`.
inline FeatureMatrix engineer_features(const FeatureMatrix& m) {
  if (!m.data.allFinite()) throw std::invalid_argument("engineer_features: non-finite input");
  const Eigen::Index d = m.n_cols();
  std::vector<double> variance(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) variance[static_cast<std::size_t>(j)] = detail::column_variance(m.data.col(j));

  std::vector<std::pair<double, Eigen::Index>> by_var, by_skew;
  for (Eigen::Index j = 0; j < d; ++j) {
    by_var.emplace_back(variance[static_cast<std::size_t>(j)], j);
    if (auto s = detail::skewness(m.data.col(j))) by_skew.emplace_back(std::abs(*s), j);
  }
  const auto sq = detail::top_indices(by_var, kSquareFamily);
  const auto lg = detail::top_indices(by_skew, kLogFamily);
  if (sq.size() < kSquareFamily) spdlog::warn("engineer_features: only {} columns available for squares", sq.size());
  if (lg.size() < kLogFamily) spdlog::warn("engineer_features: only {} non-constant columns available for log transforms", lg.size());

  std::vector<std::pair<std::string, Eigen::VectorXd>> added;
  for (Eigen::Index j : sq) added.emplace_back("sq_" + m.cols[static_cast<std::size_t>(j)], m.data.col(j).array().square().matrix());
  for (Eigen::Index j : lg) {
    const double lo = m.data.col(j).minCoeff();
    added.emplace_back("log_" + m.cols[static_cast<std::size_t>(j)], (1.0 + (m.data.col(j).array() - lo)).log().matrix());
  }

  std::vector<std::optional<Eigen::Index>> lead(kInteractionGroups.size());
  for (std::size_t g = 0; g < kInteractionGroups.size(); ++g) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (m.groups[static_cast<std::size_t>(j)] != kInteractionGroups[g]) continue;
      if (!lead[g] || variance[static_cast<std::size_t>(j)] > variance[static_cast<std::size_t>(*lead[g])]) lead[g] = j;
    }
  }
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < lead.size(); ++a) {
    for (std::size_t b = a + 1; b < lead.size(); ++b) {
      if (!lead[a] || !lead[b]) continue;
      const auto& fa = m.cols[static_cast<std::size_t>(*lead[a])];
      const auto& fb = m.cols[static_cast<std::size_t>(*lead[b])];
      added.emplace_back("x_" + fa + "_" + fb, m.data.col(*lead[a]).cwiseProduct(m.data.col(*lead[b])));
      ++pairs;
    }
  }
  if (pairs < 10) spdlog::warn("engineer_features: only {} group pairs available for interactions", pairs);

  FeatureMatrix out;
  out.rows = m.rows;
  out.cols = m.cols;
  out.groups = m.groups;
  out.data.resize(m.n_rows(), d + static_cast<Eigen::Index>(added.size()));
  out.data.leftCols(d) = m.data;
  for (std::size_t k = 0; k < added.size(); ++k) {
    out.cols.push_back(added[k].first);
    out.groups.push_back(FeatureGroup::engineered);
    out.data.col(d + static_cast<Eigen::Index>(k)) = added[k].second;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization.

struct NormalizationWeights {
  double robust = 0.5;
  double power = 0.3;
  double standard = 0.2;
};

inline constexpr double kYeoJohnsonLambdaMin = -2.0;
inline constexpr double kYeoJohnsonLambdaMax = 2.0;
inline constexpr double kYeoJohnsonLambdaStep = 0.01;

inline double yeo_johnson(double x, double lambda) {
  if (x >= 0.0) {
    return std::abs(lambda) < 1e-12 ? std::log1p(x) : (std::pow(x + 1.0, lambda) - 1.0) / lambda;
  }
  return std::abs(lambda - 2.0) < 1e-12 ? -std::log1p(-x) : -(std::pow(1.0 - x, 2.0 - lambda) - 1.0) / (2.0 - lambda);
}

/// Normal log-likelihood of the transformed column, up to a constant.
inline double yeo_johnson_llf(const Eigen::Ref<const Eigen::VectorXd>& x, double lambda) {
  const auto n = static_cast<double>(x.size());
  Eigen::VectorXd t(x.size());
  double jac = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    t(i) = yeo_johnson(x(i), lambda);
    jac += std::copysign(1.0, x(i)) * std::log1p(std::abs(x(i)));
  }
  const double var = detail::column_variance(t);
  if (!(var > 0.0) || !std::isfinite(var)) return -std::numeric_limits<double>::infinity();
  return -0.5 * n * std::log(var) + (lambda - 1.0) * jac;
}

/// Grid-search maximum-likelihood lambda; ties keep the smaller lambda.
inline double yeo_johnson_lambda(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const int steps = static_cast<int>(std::lround((kYeoJohnsonLambdaMax - kYeoJohnsonLambdaMin) / kYeoJohnsonLambdaStep));
  double best_lambda = 1.0, best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= steps; ++i) {
    const double lambda = kYeoJohnsonLambdaMin + i * kYeoJohnsonLambdaStep;
    const double llf = yeo_johnson_llf(x, lambda);
    if (llf > best) {
      best = llf;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

inline Eigen::VectorXd standardize(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double sd = std::sqrt(detail::column_variance(x));
  if (!(sd > 0.0)) return Eigen::VectorXd::Zero(x.size());
  return (x.array() - x.mean()) / sd;
}

/// (x - median) / IQR, falling back to the standard deviation when IQR is 0.
inline Eigen::VectorXd robust_scale(const Eigen::Ref<const Eigen::VectorXd>& x) {
  std::vector<double> s(x.data(), x.data() + x.size());
  std::sort(s.begin(), s.end());
  const double med = sorted_quantile(s, 0.5);
  double scale = sorted_quantile(s, 0.75) - sorted_quantile(s, 0.25);
  if (!(scale > 0.0)) scale = std::sqrt(detail::column_variance(x));
  if (!(scale > 0.0)) return Eigen::VectorXd::Zero(x.size());
  return (x.array() - med) / scale;
}

inline Eigen::VectorXd power_scale(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (!(detail::column_variance(x) > 0.0)) return Eigen::VectorXd::Zero(x.size());
  const double lambda = yeo_johnson_lambda(x);
  Eigen::VectorXd t(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) t(i) = yeo_johnson(x(i), lambda);
  return standardize(t);
}

/// Weighted blend of robust, Yeo-Johnson and standard scaling per column.
/// Constant columns become zeros.
inline FeatureMatrix ensemble_normalize(const FeatureMatrix& m, const NormalizationWeights& w = {}, std::size_t workers = 1) {
  if (!m.data.allFinite()) throw std::invalid_argument("ensemble_normalize: non-finite input");
  FeatureMatrix out = m;
  parallel_for(static_cast<std::size_t>(m.n_cols()), workers, [&](std::size_t jj) {
    const auto j = static_cast<Eigen::Index>(jj);
    const Eigen::VectorXd x = m.data.col(j);
    if (!(detail::column_variance(x) > 0.0)) {
      out.data.col(j).setZero();
      return;
    }
    out.data.col(j) = w.robust * robust_scale(x) + w.power * power_scale(x) + w.standard * standardize(x);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Per-feature scores.

namespace detail {

inline void check_classes(std::span<const int> labels, Eigen::Index rows, const char* who, bool need_two_each) {
  if (labels.size() != static_cast<std::size_t>(rows)) throw std::invalid_argument(std::string(who) + ": labels and rows differ in length");
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  if (counts.size() < 2) throw std::invalid_argument(std::string(who) + ": need at least 2 classes");
  if (need_two_each) {
    for (const auto& [c, n] : counts) {
      if (n < 2) throw std::invalid_argument(std::string(who) + ": class " + std::to_string(c) + " has fewer than 2 samples");
    }
  }
}

/// Replaces +inf entries by ten times the largest finite score (1 if none).
inline void apply_sentinel(std::vector<double>& s) {
  double mx = 0.0;
  for (double v : s) {
    if (std::isfinite(v)) mx = std::max(mx, v);
  }
  const double sentinel = mx > 0.0 ? 10.0 * mx : 1.0;
  for (double& v : s) {
    if (!std::isfinite(v)) v = sentinel;
  }
}

}  // namespace detail

/// One-way ANOVA F per column.
inline std::vector<double> anova_f(const Matrix& x, std::span<const int> labels) {
  detail::check_classes(labels, x.rows(), "anova_f", true);
  std::vector<int> lab;
  const int k = compact_labels(labels, lab);
  const auto n = static_cast<double>(x.rows());
  std::vector<double> out(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    std::vector<double> sum(static_cast<std::size_t>(k), 0.0), cnt(static_cast<std::size_t>(k), 0.0);
    for (std::size_t i = 0; i < lab.size(); ++i) {
      sum[static_cast<std::size_t>(lab[i])] += x(static_cast<Eigen::Index>(i), j);
      cnt[static_cast<std::size_t>(lab[i])] += 1.0;
    }
    const double grand = x.col(j).mean();
    double between = 0.0, within = 0.0;
    for (int c = 0; c < k; ++c) {
      const double mu = sum[static_cast<std::size_t>(c)] / cnt[static_cast<std::size_t>(c)];
      between += cnt[static_cast<std::size_t>(c)] * (mu - grand) * (mu - grand);
    }
    for (std::size_t i = 0; i < lab.size(); ++i) {
      const double mu = sum[static_cast<std::size_t>(lab[i])] / cnt[static_cast<std::size_t>(lab[i])];
      const double dv = x(static_cast<Eigen::Index>(i), j) - mu;
      within += dv * dv;
    }
    const double ms_between = between / (k - 1);
    const double ms_within = within / (n - k);
    if (ms_within <= 0.0) out[static_cast<std::size_t>(j)] = ms_between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    else out[static_cast<std::size_t>(j)] = ms_between / ms_within;
  }
  detail::apply_sentinel(out);
  return out;
}

inline constexpr int kMutualInfoBins = 16;

/// Equal-frequency bin index per value; tied values share a bin.
inline std::vector<int> quantile_bins(const Eigen::Ref<const Eigen::VectorXd>& x, int bins = kMutualInfoBins) {
  std::vector<double> s(x.data(), x.data() + x.size());
  std::sort(s.begin(), s.end());
  std::vector<double> edges;
  for (int b = 1; b < bins; ++b) edges.push_back(sorted_quantile(s, static_cast<double>(b) / bins));
  std::vector<int> out(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out[static_cast<std::size_t>(i)] = static_cast<int>(std::lower_bound(edges.begin(), edges.end(), x(i)) - edges.begin());
  }
  return out;
}

/// Plug-in MI in nats between each binned column and the labels.
inline std::vector<double> mutual_info(const Matrix& x, std::span<const int> labels) {
  detail::check_classes(labels, x.rows(), "mutual_info", false);
  std::vector<double> out(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index j = 0; j < x.cols(); ++j) out[static_cast<std::size_t>(j)] = mi_score(quantile_bins(x.col(j)), labels);
  return out;
}

/// Sample variance (n - 1 denominator) per column.
inline std::vector<double> variance_score(const Matrix& x) {
  std::vector<double> out(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index j = 0; j < x.cols(); ++j) out[static_cast<std::size_t>(j)] = detail::column_variance(x.col(j), 1.0);
  return out;
}

/// Calinski-Harabasz of the label partition on each column alone.
inline std::vector<double> cluster_separation_score(const Matrix& x, std::span<const int> labels) {
  detail::check_classes(labels, x.rows(), "cluster_separation_score", false);
  std::vector<double> out(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Matrix col = x.col(j);
    out[static_cast<std::size_t>(j)] = calinski_harabasz(col, labels);
  }
  detail::apply_sentinel(out);
  return out;
}

// ---------------------------------------------------------------------------
// Ensemble selection.

inline constexpr std::array<std::string_view, 6> kSelectionMethods = {"anova_f", "mutual_info", "rf_importance",
                                                                      "et_importance", "variance", "cluster_sep"};

struct SelectionWeights {
  std::array<double, 6> w = {0.25, 0.20, 0.20, 0.15, 0.10, 0.10};
};

struct SelectionRow {
  std::string feature;
  std::array<double, 6> raw{};
  std::array<double, 6> normalized{};
  double ensemble = 0.0;
  bool selected = false;
};

struct SelectionReport {
  /// Sorted by descending ensemble score, ties by feature name.
  std::vector<SelectionRow> rows;
  std::array<double, 6> weights{};
};

/// Min-max to [0, 1]. A flat method scores 1 everywhere when positive, else 0.
inline std::vector<double> min_max_scores(const std::vector<double>& s) {
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (*hi > *lo) out[i] = (s[i] - *lo) / (*hi - *lo);
    else out[i] = *hi > 0.0 ? 1.0 : 0.0;
  }
  return out;
}

struct SelectionOptions {
  std::size_t top_k = 100;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  SelectionWeights weights;
};

/// Scores every column with six criteria, blends the normalized scores and
/// keeps the top_k columns. Rows and columns are put in canonical order (row id,
/// column name) before scoring so the result ignores input order.
inline std::pair<FeatureMatrix, SelectionReport> ensemble_select(const FeatureMatrix& m, const LabelVector& labels, const SelectionOptions& opt = {}) {
  if (opt.top_k > static_cast<std::size_t>(m.n_cols())) {
    throw std::invalid_argument("ensemble_select: top_k " + std::to_string(opt.top_k) + " exceeds " + std::to_string(m.n_cols()) + " columns");
  }
  if (labels.labels.size() != static_cast<std::size_t>(m.n_rows())) throw std::invalid_argument("ensemble_select: labels and rows differ in length");
  const double wsum = std::accumulate(opt.weights.w.begin(), opt.weights.w.end(), 0.0);
  if (std::abs(wsum - 1.0) > 1e-12) throw std::invalid_argument("ensemble_select: weights must sum to 1");

  std::vector<Eigen::Index> row_order(static_cast<std::size_t>(m.n_rows())), col_order(static_cast<std::size_t>(m.n_cols()));
  std::iota(row_order.begin(), row_order.end(), Eigen::Index{0});
  std::iota(col_order.begin(), col_order.end(), Eigen::Index{0});
  auto by_name = [](const std::vector<std::string>& names) {
    return [&names](Eigen::Index a, Eigen::Index b) { return names[static_cast<std::size_t>(a)] < names[static_cast<std::size_t>(b)]; };
  };
  if (!m.rows.empty()) std::stable_sort(row_order.begin(), row_order.end(), by_name(m.rows));
  std::stable_sort(col_order.begin(), col_order.end(), by_name(m.cols));
  Matrix x(m.n_rows(), m.n_cols());
  std::vector<int> y(row_order.size());
  for (std::size_t i = 0; i < row_order.size(); ++i) {
    for (std::size_t j = 0; j < col_order.size(); ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m.data(row_order[i], col_order[j]);
    }
    y[i] = labels.labels[static_cast<std::size_t>(row_order[i])];
  }

  ForestParams fp;
  fp.seed = derive_seed(opt.seed, "select");
  fp.workers = opt.workers;
  std::array<std::vector<double>, 6> raw = {anova_f(x, y),
                                            mutual_info(x, y),
                                            forest_importance(x, y, ForestMode::random_forest, fp),
                                            forest_importance(x, y, ForestMode::extra_trees, fp),
                                            variance_score(x),
                                            cluster_separation_score(x, y)};

  SelectionReport report;
  report.weights = opt.weights.w;
  std::array<std::vector<double>, 6> norm;
  for (std::size_t k = 0; k < 6; ++k) norm[k] = min_max_scores(raw[k]);
  for (std::size_t j = 0; j < col_order.size(); ++j) {
    SelectionRow r;
    r.feature = m.cols[static_cast<std::size_t>(col_order[j])];
    for (std::size_t k = 0; k < 6; ++k) {
      r.raw[k] = raw[k][j];
      r.normalized[k] = norm[k][j];
      r.ensemble += opt.weights.w[k] * norm[k][j];
    }
    report.rows.push_back(std::move(r));
  }
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const SelectionRow& a, const SelectionRow& b) {
    if (a.ensemble != b.ensemble) return a.ensemble > b.ensemble;
    return a.feature < b.feature;
  });
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < opt.top_k; ++i) {
    report.rows[i].selected = true;
    keep.push_back(*m.col_index(report.rows[i].feature));
  }
  return {m.select_columns(keep), std::move(report)};
}

inline std::string selection_report_to_csv(const SelectionReport& r) {
  std::string out = "feature";
  for (auto name : kSelectionMethods) out += "," + std::string(name);
  for (auto name : kSelectionMethods) out += "," + std::string(name) + "_norm";
  out += ",ensemble,selected\n";
  for (const auto& row : r.rows) {
    out += csv::quote(row.feature);
    for (double v : row.raw) out += "," + csv::format_double(v);
    for (double v : row.normalized) out += "," + csv::format_double(v);
    out += "," + csv::format_double(row.ensemble) + "," + (row.selected ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace edm_atlas

#endif  // EDM_ATLAS_PREPROCESS_SELECT_HPP
