#ifndef EDM_ATLAS_TESTS_ORACLES_HPP
#define EDM_ATLAS_TESTS_ORACLES_HPP

// Slow, direct reference implementations used only by tests. None of these
// call into the library's own numeric code.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace oracle {

/// Pair-counting ARI: 2(ad - bc) / ((a+b)(b+d) + (a+c)(c+d)) over all pairs.
inline double ari_pairs(const std::vector<int>& p, const std::vector<int>& t) {
  double a = 0, b = 0, c = 0, d = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      const bool sp = p[i] == p[j], st = t[i] == t[j];
      if (sp && st) a += 1;
      else if (sp) b += 1;
      else if (st) c += 1;
      else d += 1;
    }
  }
  const double denom = (a + b) * (b + d) + (a + c) * (c + d);
  if (denom == 0.0) return 1.0;
  return 2.0 * (a * d - b * c) / denom;
}

inline double entropy(const std::vector<int>& x) {
  std::map<int, double> n;
  for (int v : x) n[v] += 1;
  double h = 0;
  for (auto& [k, c] : n) h -= c / x.size() * std::log(c / x.size());
  return h;
}

/// I(p; t) = H(p) + H(t) - H(p, t).
inline double mutual_info(const std::vector<int>& p, const std::vector<int>& t) {
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < p.size(); ++i) joint[{p[i], t[i]}] += 1;
  double hj = 0;
  for (auto& [k, c] : joint) hj -= c / p.size() * std::log(c / p.size());
  return entropy(p) + entropy(t) - hj;
}

inline double nmi(const std::vector<int>& p, const std::vector<int>& t) {
  const double hp = entropy(p), ht = entropy(t);
  if (hp == 0 || ht == 0) return -1;  // caller handles the degenerate convention
  return mutual_info(p, t) / std::sqrt(hp * ht);
}

template <typename M>
double silhouette(const M& x, const std::vector<int>& lab) {
  const int n = static_cast<int>(x.rows());
  double total = 0;
  for (int i = 0; i < n; ++i) {
    std::map<int, std::pair<double, int>> acc;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      auto& e = acc[lab[j]];
      e.first += (x.row(i) - x.row(j)).norm();
      e.second += 1;
    }
    if (!acc.count(lab[i]) || acc[lab[i]].second == 0) continue;
    const double a = acc[lab[i]].first / acc[lab[i]].second;
    double b = INFINITY;
    for (auto& [c, e] : acc) {
      if (c != lab[i]) b = std::min(b, e.first / e.second);
    }
    total += (b - a) / std::max(a, b);
  }
  return total / n;
}

/// DFA with explicit least-squares line fits on t = 0..s-1.
inline double dfa(const std::vector<double>& x, const std::vector<std::size_t>& sizes) {
  double m = 0;
  for (double v : x) m += v;
  m /= x.size();
  std::vector<double> y(x.size());
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = acc += x[i] - m;
  std::vector<double> lx, ly;
  for (std::size_t s : sizes) {
    const std::size_t w = y.size() / s;
    double sq = 0;
    for (std::size_t k = 0; k < w; ++k) {
      Eigen::MatrixXd a(s, 2);
      Eigen::VectorXd b(s);
      for (std::size_t i = 0; i < s; ++i) {
        a(i, 0) = 1;
        a(i, 1) = static_cast<double>(i);
        b(i) = y[k * s + i];
      }
      const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(b);
      sq += (b - a * coef).squaredNorm();
    }
    lx.push_back(std::log(static_cast<double>(s)));
    ly.push_back(0.5 * std::log(sq / (w * s)));
  }
  Eigen::MatrixXd a(lx.size(), 2);
  Eigen::VectorXd b(lx.size());
  for (std::size_t i = 0; i < lx.size(); ++i) {
    a(i, 0) = 1;
    a(i, 1) = lx[i];
    b(i) = ly[i];
  }
  return a.colPivHouseholderQr().solve(b)(1);
}

/// One-way ANOVA F from textbook sums of squares.
inline double anova_f(const std::vector<double>& x, const std::vector<int>& g) {
  std::map<int, std::vector<double>> groups;
  for (std::size_t i = 0; i < x.size(); ++i) groups[g[i]].push_back(x[i]);
  double grand = 0;
  for (double v : x) grand += v;
  grand /= x.size();
  double ssb = 0, ssw = 0;
  for (auto& [k, v] : groups) {
    double m = 0;
    for (double e : v) m += e;
    m /= v.size();
    ssb += v.size() * (m - grand) * (m - grand);
    for (double e : v) ssw += (e - m) * (e - m);
  }
  const double k = groups.size(), n = x.size();
  return (ssb / (k - 1)) / (ssw / (n - k));
}

/// Magnitude of a direct DFT of x at frequency f (cycles per sample).
inline double dft_magnitude(const std::vector<double>& x, double f) {
  std::complex<double> acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * std::polar(1.0, -2.0 * M_PI * f * static_cast<double>(i));
  return std::abs(acc);
}

/// Small independent generator so oracle inputs do not share the library RNG.
struct Lcg {
  std::uint64_t s;
  explicit Lcg(std::uint64_t seed) : s(seed * 6364136223846793005ULL + 1442695040888963407ULL) {}
  std::uint64_t next() {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    return s >> 17;
  }
  int below(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }
  double uniform() { return static_cast<double>(next() % (1ULL << 40)) / static_cast<double>(1ULL << 40); }
  double normal() {
    double u = 0;
    while (u <= 0) u = uniform();
    return std::sqrt(-2 * std::log(u)) * std::cos(2 * M_PI * uniform());
  }
};

/// Gaussian blobs: `centers` rows, `per` points each, isotropic sigma.
inline std::pair<Eigen::MatrixXd, std::vector<int>> blobs(const Eigen::MatrixXd& centers, int per, double sigma, std::uint64_t seed) {
  Lcg rng(seed);
  Eigen::MatrixXd x(centers.rows() * per, centers.cols());
  std::vector<int> y;
  for (int c = 0; c < centers.rows(); ++c) {
    for (int i = 0; i < per; ++i) {
      for (int d = 0; d < centers.cols(); ++d) x(c * per + i, d) = centers(c, d) + sigma * rng.normal();
      y.push_back(c);
    }
  }
  return {x, y};
}

}  // namespace oracle

#endif  // EDM_ATLAS_TESTS_ORACLES_HPP
