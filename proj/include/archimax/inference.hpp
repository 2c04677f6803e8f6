#pragma once
// Rank-based inference: pseudo-observations, pairwise distortion fits,
// the homogeneity test with jackknife covariance, the CFG Pickands
// estimator and block-maxima preprocessing.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>

#include "errors.hpp"
#include "generator.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "sampler.hpp"
#include "stdf.hpp"

namespace archimax {

// ---------------------------------------------------------------------------
// Ranks.

// 1-based ranks, ties get the average of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && x[idx[j]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) r[idx[k]] = avg;
    i = j;
  }
  return r;
}

inline std::vector<double> column_of(const Matrix& m, Eigen::Index j) {
  std::vector<double> c(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) c[static_cast<std::size_t>(i)] = m(i, j);
  return c;
}

inline Matrix select_columns(const Matrix& m, std::span<const int> cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(cols[c]);
  return out;
}

// Column-wise ranks scaled by 1/(n+1).
inline Matrix pseudo_observations(const Matrix& data) {
  const auto n = data.rows();
  if (n < 2) throw ValidationError("insufficient_data", "pseudo-observations need at least 2 rows");
  Matrix u(n, data.cols());
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    auto c = column_of(data, j);
    for (double v : c)
      if (!std::isfinite(v)) throw ValidationError("invalid_value", "non-finite value in column " + std::to_string(j + 1));
    if (std::all_of(c.begin(), c.end(), [&](double v) { return v == c[0]; }))
      throw ValidationError("constant_column", "column " + std::to_string(j + 1) + " is constant");
    auto r = average_ranks(c);
    for (Eigen::Index i = 0; i < n; ++i) u(i, j) = r[static_cast<std::size_t>(i)] / static_cast<double>(n + 1);
  }
  return u;
}

// ---------------------------------------------------------------------------
// Kendall-distribution moments.
//
// With c_j = #{k : x_k < x_j, y_k < y_j}, the U-statistics
//   m1 = sum c_j / (n(n-1)),  m2 = sum c_j(c_j - 1) / (n(n-1)(n-2))
// estimate E[C(U,V)] and E[C(U,V)^2].

struct KendallMoments {
  double m1 = 0.0, m2 = 0.0;
  std::size_t n = 0;
};

namespace detail {

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : t_(n + 1, 0) {}
  void add(std::size_t i, std::int64_t v) {
    for (++i; i < t_.size(); i += i & (~i + 1)) t_[i] += v;
  }
  // sum over [0, i)
  [[nodiscard]] std::int64_t prefix(std::size_t i) const {
    std::int64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += t_[i];
    return s;
  }

 private:
  std::vector<std::int64_t> t_;
};

// dense 0-based ranks of distinct values
inline std::vector<std::size_t> dense_ranks(std::span<const double> y, std::size_t& levels) {
  std::vector<double> s(y.begin(), y.end());
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  levels = s.size();
  std::vector<std::size_t> r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    r[i] = static_cast<std::size_t>(std::lower_bound(s.begin(), s.end(), y[i]) - s.begin());
  return r;
}

struct Dominance {
  std::vector<std::int64_t> below;      // c_j
  std::vector<std::int64_t> above;      // #{k : x_k > x_j, y_k > y_j}
  std::vector<std::int64_t> above_sum;  // sum of c_k over those k
};

inline Dominance dominance(std::span<const double> x, std::span<const double> y, bool with_above) {
  const std::size_t n = x.size();
  std::size_t levels = 0;
  const auto ry = dense_ranks(y, levels);
  std::vector<std::size_t> ord(n);
  std::iota(ord.begin(), ord.end(), 0);
  std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  Dominance d;
  d.below.assign(n, 0);
  {
    Fenwick f(levels);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j < n && x[ord[j]] == x[ord[i]]) ++j;
      for (std::size_t k = i; k < j; ++k) d.below[ord[k]] = f.prefix(ry[ord[k]]);
      for (std::size_t k = i; k < j; ++k) f.add(ry[ord[k]], 1);
      i = j;
    }
  }
  if (!with_above) return d;
  d.above.assign(n, 0);
  d.above_sum.assign(n, 0);
  Fenwick cnt(levels), sum(levels);
  std::int64_t inserted = 0, inserted_sum = 0;
  for (std::size_t i = n; i > 0;) {
    std::size_t j = i;
    while (j > 0 && x[ord[j - 1]] == x[ord[i - 1]]) --j;
    for (std::size_t k = j; k < i; ++k) {
      const std::size_t o = ord[k];
      d.above[o] = inserted - cnt.prefix(ry[o] + 1);
      d.above_sum[o] = inserted_sum - sum.prefix(ry[o] + 1);
    }
    for (std::size_t k = j; k < i; ++k) {
      const std::size_t o = ord[k];
      cnt.add(ry[o], 1);
      sum.add(ry[o], d.below[o]);
      ++inserted;
      inserted_sum += d.below[o];
    }
    i = j;
  }
  return d;
}

inline KendallMoments moments_from_sums(std::int64_t s1, std::int64_t s2, std::size_t n) {
  const double nn = static_cast<double>(n);
  return {static_cast<double>(s1) / (nn * (nn - 1.0)), static_cast<double>(s2) / (nn * (nn - 1.0) * (nn - 2.0)), n};
}

}  // namespace detail

inline KendallMoments kendall_moments(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("dimension_mismatch", "columns differ in length");
  if (x.size() < 3) throw ValidationError("insufficient_data", "Kendall moments need n >= 3");
  const auto d = detail::dominance(x, y, false);
  std::int64_t s1 = 0, s2 = 0;
  for (auto c : d.below) {
    s1 += c;
    s2 += c * (c - 1);
  }
  return detail::moments_from_sums(s1, s2, x.size());
}

// Moments of every leave-one-out subsample, O(n log n) in total.
inline std::vector<KendallMoments> kendall_moments_loo(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("dimension_mismatch", "columns differ in length");
  if (x.size() < 4) throw ValidationError("insufficient_data", "leave-one-out moments need n >= 4");
  const auto d = detail::dominance(x, y, true);
  std::int64_t s1 = 0, s2 = 0;
  for (auto c : d.below) {
    s1 += c;
    s2 += c * (c - 1);
  }
  const std::size_t n = x.size();
  std::vector<KendallMoments> out(n);
  for (std::size_t v = 0; v < n; ++v) {
    const auto c = d.below[v], b = d.above[v], s = d.above_sum[v];
    out[v] = detail::moments_from_sums(s1 - c - b, s2 - c * (c - 1) - 2 * (s - b), n - 1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model side. For a bivariate Archimax copula the Kendall distribution is
// K(t) = t - (1 - tau_A) phi(t)/phi'(t), so
//   E[C] = 1/2 + (1 - tau_A) I1,  E[C^2] = 1/3 + 2 (1 - tau_A) I2
// with I1 = int phi/phi', I2 = int t phi/phi' over (0,1).

struct KendallIntegrals {
  double i1, i2;
};

inline KendallIntegrals kendall_integrals(const ArchimedeanGenerator& g) {
  const double th = g.theta();
  if (g.family() == Family::Clayton) return {-1.0 / (2.0 * (th + 2.0)), -1.0 / (3.0 * (th + 3.0))};
  auto& ts = detail::tanh_sinh_integrator();
  const double i1 = ts.integrate([&](double t) { return g.kendall_ratio(t); }, 0.0, 1.0, 1e-13);
  const double i2 = ts.integrate([&](double t) { return t * g.kendall_ratio(t); }, 0.0, 1.0, 1e-13);
  return {i1, i2};
}

// I2/I1: depends on the generator only; 4/9 at independence.
inline double kendall_moment_ratio(Family f, double theta) {
  const auto I = kendall_integrals(ArchimedeanGenerator(f, theta));
  return I.i2 / I.i1;
}

// Kendall's tau of the extreme-value copula with logistic stdf.
inline double logistic_ev_tau(double vartheta) { return 1.0 - 1.0 / vartheta; }

inline double archimax_kendall_tau(const ArchimedeanGenerator& g, double tau_ev) {
  return 1.0 + 4.0 * (1.0 - tau_ev) * kendall_integrals(g).i1;
}

namespace detail {

// Logistic parameter of a bivariate closed-form stdf; quadrature moments
// need the partial derivative of ell.
inline double bivariate_logistic_parameter(const Stdf& ell) {
  if (ell.dim() != 2) throw ValidationError("dimension_mismatch", "bivariate stdf required");
  if (ell.kind() == Stdf::Kind::Independence) return 1.0;
  auto v = ell.logistic_parameter();
  if (!v) throw CapabilityError("copula moments by quadrature need a logistic-type stdf");
  return *v;
}

}  // namespace detail

// C(u,v) = psi(ell(phi(u), phi(v)))
inline double archimax_cdf(const ArchimedeanGenerator& g, const Stdf& ell, double u, double v) {
  return g.psi(ell({g.phi(u), g.phi(v)}));
}

// tau = 1 - 4 int int dC/du dC/dv by tensor Gauss-Legendre quadrature.
inline double archimax_kendall_tau_quadrature(const ArchimedeanGenerator& g, const Stdf& ell, int nodes = 200) {
  const double vt = detail::bivariate_logistic_parameter(ell);
  const auto& rule = gauss_legendre(nodes);
  std::vector<double> t(nodes), w(nodes), x(nodes), dx(nodes);
  for (int i = 0; i < nodes; ++i) {
    t[i] = 0.5 * (rule.nodes[i] + 1.0);
    w[i] = 0.5 * rule.weights[i];
    x[i] = g.phi(t[i]);
    dx[i] = g.phi_prime(t[i]);
  }
  double acc = 0.0;
  for (int i = 0; i < nodes; ++i) {
    for (int j = 0; j < nodes; ++j) {
      const double l = std::pow(std::pow(x[i], vt) + std::pow(x[j], vt), 1.0 / vt);
      const double d1 = g.derivative(1, l);
      const double cu = d1 * std::pow(x[i] / l, vt - 1.0) * dx[i];
      const double cv = d1 * std::pow(x[j] / l, vt - 1.0) * dx[j];
      acc += w[i] * w[j] * cu * cv;
    }
  }
  return 1.0 - 4.0 * acc;
}

// rho_S = 12 int int C - 3
inline double archimax_spearman_rho(const ArchimedeanGenerator& g, const Stdf& ell, int nodes = 200) {
  if (ell.dim() != 2) throw ValidationError("dimension_mismatch", "bivariate stdf required");
  const auto& rule = gauss_legendre(nodes);
  std::vector<double> t(nodes), w(nodes), x(nodes);
  for (int i = 0; i < nodes; ++i) {
    t[i] = 0.5 * (rule.nodes[i] + 1.0);
    w[i] = 0.5 * rule.weights[i];
    x[i] = g.phi(t[i]);
  }
  double acc = 0.0;
  for (int i = 0; i < nodes; ++i)
    for (int j = 0; j < nodes; ++j) acc += w[i] * w[j] * g.psi(ell({x[i], x[j]}));
  return 12.0 * acc - 3.0;
}

// ---------------------------------------------------------------------------
// Pairwise distortion fit.

struct ThetaBox {
  double lo, hi;
};

inline ThetaBox theta_box(Family f) {
  switch (f) {
    case Family::Clayton: return {1e-3, 100.0};
    case Family::Joe: return {1.0, 100.0};
    case Family::Frank: return {1e-3, 100.0};
  }
  return {1.0, 1.0};
}

inline constexpr double kMaxVartheta = 100.0;

struct PairFit {
  double theta = 0.0;
  double vartheta = 1.0;
  double tau_ev = 0.0;
  KendallMoments moments;
  bool theta_at_bound = false;
  bool vartheta_at_bound = false;
};

namespace detail {

struct RatioTable {
  std::vector<double> theta, ratio;  // ratio monotone in theta
};

inline const RatioTable& ratio_table(Family f) {
  static std::once_flag once[3];
  static RatioTable tables[3];
  const auto k = static_cast<std::size_t>(f);
  std::call_once(once[k], [&] {
    const auto box = theta_box(f);
    const int n = 97;
    auto& tb = tables[k];
    for (int i = 0; i < n; ++i) {
      const double th = std::exp(std::log(box.lo) + (std::log(box.hi) - std::log(box.lo)) * i / (n - 1));
      tb.theta.push_back(th);
      tb.ratio.push_back(kendall_moment_ratio(f, th));
    }
  });
  return tables[k];
}

// theta with I2/I1 = r, clamped to the family box
inline double solve_theta(Family f, double r, bool& at_bound) {
  at_bound = false;
  const auto box = theta_box(f);
  if (f == Family::Clayton) {
    // I2/I1 = 2(theta+2)/(3(theta+3))
    if (!(r > 4.0 / 9.0)) {
      at_bound = true;
      return box.lo;
    }
    if (r >= 2.0 / 3.0) {
      at_bound = true;
      return box.hi;
    }
    const double th = (4.0 - 9.0 * r) / (3.0 * r - 2.0);
    if (th < box.lo || th > box.hi) {
      at_bound = true;
      return std::clamp(th, box.lo, box.hi);
    }
    return th;
  }
  const auto& tb = ratio_table(f);
  const double sign = tb.ratio.back() > tb.ratio.front() ? 1.0 : -1.0;
  // increasing in theta after the sign flip
  const double target = sign * r;
  if (target <= sign * tb.ratio.front()) {
    at_bound = true;
    return box.lo;
  }
  if (target >= sign * tb.ratio.back()) {
    at_bound = true;
    return box.hi;
  }
  std::size_t hi = 1;
  while (hi + 1 < tb.theta.size() && sign * tb.ratio[hi] < target) ++hi;
  const std::size_t lo = hi - 1;
  auto g = [&](double th) { return sign * (kendall_moment_ratio(f, th) - r); };
  const double glo = sign * (tb.ratio[lo] - r), ghi = sign * (tb.ratio[hi] - r);
  if (glo == 0.0) return tb.theta[lo];
  if (ghi == 0.0) return tb.theta[hi];
  std::uintmax_t it = 100;
  auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-12 * std::max(1.0, std::abs(a)); };
  auto [a, b] = boost::math::tools::toms748_solve(g, tb.theta[lo], tb.theta[hi], glo, ghi, tol, it);
  if (it >= 100 && std::abs(b - a) > 1e-8)
    throw NumericalError("distortion fit: root refinement did not converge");
  return 0.5 * (a + b);
}

}  // namespace detail

// (theta, vartheta) from the two Kendall-distribution moments: the moment
// ratio fixes theta, then the first moment gives tau of the logistic
// attractor, vartheta = 1/(1 - tau_ev).
inline PairFit fit_from_moments(const KendallMoments& m, Family f) {
  PairFit out;
  out.moments = m;
  const double d1 = m.m1 - 0.5;
  if (!(d1 < -1e-12)) {
    // comonotone sample: theta not identified
    out.theta = theta_box(f).lo;
    out.theta_at_bound = true;
    out.vartheta = kMaxVartheta;
    out.vartheta_at_bound = true;
    out.tau_ev = 1.0 - 1.0 / kMaxVartheta;
    return out;
  }
  const double r = (m.m2 - 1.0 / 3.0) / (2.0 * d1);
  out.theta = detail::solve_theta(f, r, out.theta_at_bound);
  const double i1 = kendall_integrals(ArchimedeanGenerator(f, out.theta)).i1;
  double tau = 1.0 - d1 / i1;
  const double tau_max = 1.0 - 1.0 / kMaxVartheta;
  if (tau < 0.0 || tau > tau_max) {
    out.vartheta_at_bound = true;
    tau = std::clamp(tau, 0.0, tau_max);
  }
  out.tau_ev = tau;
  out.vartheta = 1.0 / (1.0 - tau);
  return out;
}

inline PairFit pairwise_theta_fit(std::span<const double> x, std::span<const double> y, Family f) {
  if (x.size() < 20) throw ValidationError("insufficient_data", "pairwise fit needs n >= 20");
  return fit_from_moments(kendall_moments(x, y), f);
}

// Intra-cluster pairs (k, i, j), i < j, ordered lexicographically.
struct PairIndex {
  int k, i, j;
};

inline std::vector<PairIndex> homogeneity_index(const ClusterPartition& p) {
  std::vector<PairIndex> idx;
  for (int k = 0; k < p.size(); ++k) {
    auto b = p.blocks[k];
    std::sort(b.begin(), b.end());
    for (std::size_t a = 0; a < b.size(); ++a)
      for (std::size_t c = a + 1; c < b.size(); ++c) idx.push_back({k, b[a], b[c]});
  }
  return idx;
}

struct PairwiseEstimates {
  std::vector<PairIndex> index;
  std::vector<PairFit> fits;
  Matrix theta;     // d x d, NaN outside clusters
  Matrix vartheta;  // d x d, NaN outside clusters
};

inline void check_families(const ClusterPartition& p, std::span<const Family> families) {
  if (static_cast<int>(families.size()) != p.size())
    throw ValidationError("dimension_mismatch", "one generator family per cluster required");
}

inline PairwiseEstimates fit_pairwise(const Matrix& data, const ClusterPartition& p, std::span<const Family> families) {
  p.validate();
  check_families(p, families);
  if (data.cols() != p.dim()) throw ValidationError("dimension_mismatch", "data columns do not match the partition");
  PairwiseEstimates est;
  est.index = homogeneity_index(p);
  const auto d = data.cols();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  est.theta = Matrix::Constant(d, d, nan);
  est.vartheta = Matrix::Constant(d, d, nan);
  for (const auto& ix : est.index) {
    const auto x = column_of(data, ix.i), y = column_of(data, ix.j);
    auto f = pairwise_theta_fit(x, y, families[ix.k]);
    est.theta(ix.i, ix.j) = est.theta(ix.j, ix.i) = f.theta;
    est.vartheta(ix.i, ix.j) = est.vartheta(ix.j, ix.i) = f.vartheta;
    est.fits.push_back(f);
  }
  return est;
}

// Per-cluster mean of a symmetric matrix of pairwise estimates.
inline std::vector<double> cluster_theta_bar(const Matrix& pairwise, const ClusterPartition& p) {
  std::vector<double> bar(p.size());
  for (int k = 0; k < p.size(); ++k) {
    const auto& b = p.blocks[k];
    double s = 0.0;
    int m = 0;
    for (std::size_t a = 0; a < b.size(); ++a)
      for (std::size_t c = a + 1; c < b.size(); ++c) {
        const double v = pairwise(b[a], b[c]);
        if (std::isnan(v))
          throw ValidationError("missing_pair", "no estimate for pair (" + std::to_string(b[a] + 1) + "," +
                                                    std::to_string(b[c] + 1) + ")");
        s += v;
        ++m;
      }
    bar[k] = s / m;
  }
  return bar;
}

// T_{ijk} = theta_ij - theta_bar_k over the homogeneity index.
inline Eigen::VectorXd homogeneity_statistic(const Matrix& pairwise, std::span<const double> theta_bar,
                                             const ClusterPartition& p) {
  const auto idx = homogeneity_index(p);
  Eigen::VectorXd t(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) {
    const double v = pairwise(idx[a].i, idx[a].j);
    if (std::isnan(v)) throw ValidationError("missing_pair", "pairwise estimate missing");
    t(static_cast<Eigen::Index>(a)) = v - theta_bar[idx[a].k];
  }
  return t;
}

// Covariance of sqrt(n) T from leave-one-out values (rows of `loo`): the
// pseudo-values T*_v = nT - (n-1)T_v give
//   Sigma = 1/(n-1) sum (T*_v - mean T*)(T*_v - mean T*)^T
//         = (n-1) sum (T_v - mean T_v)(T_v - mean T_v)^T,
// computed in the second form after shifting by the first row.
inline Matrix jackknife_covariance(const Matrix& loo) {
  const auto n = loo.rows();
  if (n < 2) throw ValidationError("insufficient_data", "jackknife needs n >= 2");
  Matrix c = loo.rowwise() - loo.row(0);
  const Eigen::RowVectorXd mean = c.colwise().mean();
  c.rowwise() -= mean;
  Matrix s = static_cast<double>(n - 1) * (c.transpose() * c);
  return 0.5 * (s + s.transpose());
}

struct JackknifeResult {
  Eigen::VectorXd T;
  Matrix sigma;
  Matrix loo;  // n x |index|
  PairwiseEstimates estimates;
  std::vector<double> theta_bar;
};

inline JackknifeResult jackknife_sigma(const Matrix& data, const ClusterPartition& p, std::span<const Family> families) {
  JackknifeResult out;
  out.estimates = fit_pairwise(data, p, families);
  out.theta_bar = cluster_theta_bar(out.estimates.theta, p);
  out.T = homogeneity_statistic(out.estimates.theta, out.theta_bar, p);
  const auto& idx = out.estimates.index;
  const auto n = static_cast<std::size_t>(data.rows());
  const auto m = idx.size();
  Matrix theta_loo(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (std::size_t a = 0; a < m; ++a) {
    const auto x = column_of(data, idx[a].i), y = column_of(data, idx[a].j);
    const auto mom = kendall_moments_loo(x, y);
    const Family f = families[idx[a].k];
    std::vector<std::string> failures(n);
    parallel_blocks(n, 64, [&](std::size_t, std::size_t lo, std::size_t hi) {
      for (std::size_t v = lo; v < hi; ++v) {
        try {
          theta_loo(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(a)) = fit_from_moments(mom[v], f).theta;
        } catch (const std::exception& e) {
          failures[v] = e.what();
        }
      }
    });
    for (std::size_t v = 0; v < n; ++v)
      if (!failures[v].empty())
        throw NumericalError("leave-one-out refit failed at observation " + std::to_string(v + 1) + ": " + failures[v]);
  }
  out.loo.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<double> sum(p.size(), 0.0);
    std::vector<int> cnt(p.size(), 0);
    for (std::size_t a = 0; a < m; ++a) {
      sum[idx[a].k] += theta_loo(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(a));
      ++cnt[idx[a].k];
    }
    for (std::size_t a = 0; a < m; ++a)
      out.loo(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(a)) =
          theta_loo(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(a)) - sum[idx[a].k] / cnt[idx[a].k];
  }
  out.sigma = jackknife_covariance(out.loo);
  return out;
}

// ---------------------------------------------------------------------------
// Homogeneity test: p = Pr(||Z|| >= ||s T||), Z ~ N(0, Sigma), s = sqrt(n)
// by default since Sigma estimates the covariance of sqrt(n) T.

enum class TestScaling { SqrtN, Raw };
inline constexpr TestScaling kDefaultScaling = TestScaling::SqrtN;

struct HomogeneityTest {
  double stat_sup = 0.0, stat_euclid = 0.0;
  double p_sup = 1.0, p_euclid = 1.0;
  int clipped_eigenvalues = 0;
  double min_eigenvalue = 0.0;
};

inline HomogeneityTest homogeneity_test(const Eigen::VectorXd& T, const Matrix& sigma, std::size_t n, std::size_t n_mc,
                                        std::uint64_t seed, TestScaling scaling = kDefaultScaling) {
  const auto m = T.size();
  if (sigma.rows() != m || sigma.cols() != m) throw ValidationError("dimension_mismatch", "Sigma does not match T");
  if (n_mc == 0) throw ValidationError("parameter_domain", "n_mc must be positive");
  HomogeneityTest res;
  const double s = scaling == TestScaling::SqrtN ? std::sqrt(static_cast<double>(n)) : 1.0;
  res.stat_sup = s * T.cwiseAbs().maxCoeff();
  res.stat_euclid = s * T.norm();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (sigma + sigma.transpose()));
  Eigen::VectorXd ev = es.eigenvalues();
  res.min_eigenvalue = ev.minCoeff();
  for (Eigen::Index i = 0; i < m; ++i)
    if (ev(i) < 0.0) {
      ev(i) = 0.0;
      ++res.clipped_eigenvalues;
    }
  const Matrix L = es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
  const std::size_t block = 4096;
  const std::size_t nb = (n_mc + block - 1) / block;
  std::vector<std::int64_t> hs(nb, 0), he(nb, 0);
  parallel_blocks(n_mc, block, [&](std::size_t b, std::size_t lo, std::size_t hi) {
    Engine g = substream(seed, b);
    Eigen::VectorXd z(m), y(m);
    for (std::size_t i = lo; i < hi; ++i) {
      for (Eigen::Index k = 0; k < m; ++k) z(k) = std_normal(g);
      y.noalias() = L * z;
      hs[b] += y.cwiseAbs().maxCoeff() >= res.stat_sup;
      he[b] += y.norm() >= res.stat_euclid;
    }
  });
  const double N = static_cast<double>(n_mc);
  res.p_sup = static_cast<double>(std::accumulate(hs.begin(), hs.end(), std::int64_t{0})) / N;
  res.p_euclid = static_cast<double>(std::accumulate(he.begin(), he.end(), std::int64_t{0})) / N;
  return res;
}

struct HomogeneityResult {
  JackknifeResult jackknife;
  HomogeneityTest test;
};

inline HomogeneityResult homogeneity(const Matrix& data, const ClusterPartition& p, std::span<const Family> families,
                                     std::size_t n_mc, std::uint64_t seed, TestScaling scaling = kDefaultScaling) {
  HomogeneityResult r;
  r.jackknife = jackknife_sigma(data, p, families);
  r.test = homogeneity_test(r.jackknife.T, r.jackknife.sigma, static_cast<std::size_t>(data.rows()), n_mc, seed, scaling);
  return r;
}

// ---------------------------------------------------------------------------
// CFG estimator of the Pickands function of an Archimax cluster with known
// generator:
//   log A(w) = mean_j log phi(j/(n+1)) - mean_j log min_i phi(U_ij)/w_i.

struct CfgEstimate {
  double value = 1.0;  // clamped to [max w, 1]
  double raw = 1.0;
  bool clamped = false;
};

inline CfgEstimate cfg_pickands(const Matrix& block, double theta_bar, Family f, std::span<const double> w) {
  if (static_cast<Eigen::Index>(w.size()) != block.cols())
    throw ValidationError("dimension_mismatch", "w length differs from the block dimension");
  const auto ws = checked_simplex(w);
  const ArchimedeanGenerator g(f, theta_bar);
  const auto n = static_cast<std::size_t>(block.rows());
  if (n < 2) throw ValidationError("insufficient_data", "CFG estimator needs n >= 2");
  std::vector<double> a(n), b(n);
  for (std::size_t j = 0; j < n; ++j) {
    a[j] = std::log(g.phi(static_cast<double>(j + 1) / static_cast<double>(n + 1)));
    double xi = kInf;
    for (Eigen::Index i = 0; i < block.cols(); ++i) {
      const double wi = ws[static_cast<std::size_t>(i)];
      if (wi > 0.0) xi = std::min(xi, g.phi(block(static_cast<Eigen::Index>(j), i)) / wi);
    }
    b[j] = std::log(xi);
  }
  // paired after sorting, so that identical multisets cancel term by term
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += a[j] - b[j];
  CfgEstimate e;
  e.raw = std::exp(s / static_cast<double>(n));
  const double lo = *std::max_element(ws.begin(), ws.end());
  e.value = std::clamp(e.raw, lo, 1.0);
  e.clamped = e.value != e.raw;
  return e;
}

struct CfgLambda {
  double lambda = 0.0;
  double pickands_half = 1.0;
  double alpha = 1.0;
  bool clamped = false;
};

// lambda_ij = 2 - (2 A_ij(1/2,1/2))^alpha, alpha the attractor index of the
// generator at theta_bar (1 for Clayton and Frank).
inline CfgLambda cfg_lambda(const Matrix& pobs, const ClusterPartition& p, std::span<const double> theta_bar,
                            std::span<const Family> families, int i, int j) {
  check_families(p, families);
  const auto cl = p.cluster_of();
  if (i < 0 || j < 0 || i >= static_cast<int>(cl.size()) || j >= static_cast<int>(cl.size()))
    throw ValidationError("index_out_of_range", "pair index outside the data");
  if (cl[i] != cl[j]) throw ValidationError("cross_cluster_pair", "pair is not inside one cluster");
  const int k = cl[i];
  const std::array<int, 2> cols{i, j};
  const std::array<double, 2> half{0.5, 0.5};
  const auto a = cfg_pickands(select_columns(pobs, cols), theta_bar[k], families[k], half);
  CfgLambda out;
  out.pickands_half = a.value;
  out.alpha = ArchimedeanGenerator(families[k], theta_bar[k]).attractor_index();
  const double raw = 2.0 - std::pow(2.0 * a.value, out.alpha);
  out.lambda = std::clamp(raw, 0.0, 1.0);
  out.clamped = a.clamped || out.lambda != raw;
  return out;
}

// ---------------------------------------------------------------------------
// Block maxima.

struct Date {
  int year = 0, month = 0, day = 0;
};

// YYYY-MM-DD, optionally followed by 'T' or ' ' and a time of day.
inline Date parse_iso_date(std::string_view s) {
  auto bad = [&] { return ValidationError("invalid_date", "unparseable date '" + std::string(s) + "'"); };
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') throw bad();
  if (s.size() > 10 && s[10] != 'T' && s[10] != ' ') throw bad();
  auto num = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (s[i] < '0' || s[i] > '9') throw bad();
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  Date d{num(0, 4), num(5, 2), num(8, 2)};
  const std::chrono::year_month_day ymd{std::chrono::year{d.year}, std::chrono::month{static_cast<unsigned>(d.month)},
                                        std::chrono::day{static_cast<unsigned>(d.day)}};
  if (!ymd.ok()) throw bad();
  return d;
}

enum class BlockRule { Month, Year };

struct BlockMaxima {
  std::vector<std::pair<int, int>> blocks;  // (year, month); month 0 for yearly blocks
  Matrix values;
  std::size_t dropped_blocks = 0;
  std::size_t rows_used = 0;
};

// Maximum of every (year, month) or year block restricted to the months in
// `months`. NaN entries count as missing; a block missing any column is
// dropped, as are calendar blocks between the first and last year with no
// rows at all.
inline BlockMaxima block_maxima(std::span<const Date> dates, const Matrix& values, const std::set<int>& months,
                                BlockRule rule) {
  if (months.empty()) throw ValidationError("empty_filter", "month filter is empty");
  for (int m : months)
    if (m < 1 || m > 12) throw ValidationError("parameter_domain", "month outside 1..12");
  if (static_cast<Eigen::Index>(dates.size()) != values.rows())
    throw ValidationError("dimension_mismatch", "dates and values differ in length");
  const auto d = values.cols();
  std::map<std::pair<int, int>, Eigen::RowVectorXd> acc;
  BlockMaxima out;
  int y0 = std::numeric_limits<int>::max(), y1 = std::numeric_limits<int>::min();
  for (std::size_t r = 0; r < dates.size(); ++r) {
    const auto& dt = dates[r];
    if (!months.count(dt.month)) continue;
    ++out.rows_used;
    y0 = std::min(y0, dt.year);
    y1 = std::max(y1, dt.year);
    const std::pair<int, int> key{dt.year, rule == BlockRule::Month ? dt.month : 0};
    auto it = acc.find(key);
    if (it == acc.end())
      it = acc.emplace(key, Eigen::RowVectorXd::Constant(d, -std::numeric_limits<double>::infinity())).first;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double v = values(static_cast<Eigen::Index>(r), j);
      if (!std::isnan(v)) it->second(j) = std::max(it->second(j), v);
    }
  }
  if (out.rows_used == 0) throw ValidationError("empty_selection", "no observation falls in the month filter");
  const std::size_t expected =
      static_cast<std::size_t>(y1 - y0 + 1) * (rule == BlockRule::Month ? months.size() : std::size_t{1});
  std::vector<Eigen::RowVectorXd> rows;
  for (const auto& [key, row] : acc) {
    if (!row.array().isFinite().all()) continue;
    out.blocks.push_back(key);
    rows.push_back(row);
  }
  out.dropped_blocks = expected - out.blocks.size();
  out.values.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) out.values.row(static_cast<Eigen::Index>(i)) = rows[i];
  return out;
}

}  // namespace archimax
