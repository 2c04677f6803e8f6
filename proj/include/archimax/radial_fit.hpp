#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/tools/minima.hpp>

#include "errors.hpp"
#include "generator.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "sampler.hpp"

namespace archimax {

// Composite likelihood for a Gaussian radial copula with the generators held fixed.

struct RadialFitConfig {
  int nodes = 64;            // quadrature nodes per axis
  double lower = -0.999;     // correlation search interval
  double upper = 0.999;

  void validate() const {
    if (nodes < 16) throw ValidationError("parameter_domain", "quadrature needs at least 16 nodes per axis");
    if (!(lower > -1.0 && upper < 1.0 && lower < upper))
      throw ValidationError("parameter_domain", "correlation bounds must satisfy -1 < lower < upper < 1");
  }
};

inline constexpr double kClipEpsilon = 1e-6;
inline constexpr double kLogFloor = -745.0;
inline constexpr double kPruneRatio = 1e-14;

inline double std_normal_quantile(double p) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p); }

// Log density and normal score of log R on a uniform grid, interpolated by cubic B-splines.
// The grid spans the radial law from lower-tail mass 1e-15 to upper-tail mass 1e-15.
class LogRadiusTable {
 public:
  LogRadiusTable(const ArchimedeanGenerator& gen, int d, double step = 0.02) : law_(gen, d) {
    constexpr double tail = 1e-15;
    lo_ = std::log(law_.quantile(tail));
    hi_ = std::log(law_.survival_quantile(tail));
    const int n = std::max(8, static_cast<int>(std::ceil((hi_ - lo_) / step)) + 1);
    step_ = (hi_ - lo_) / (n - 1);
    std::vector<double> lf(n), z(n);
    for (int i = 0; i < n; ++i) {
      const double r = std::exp(lo_ + i * step_);
      lf[i] = std::log(law_.pdf(r));
      const double s = law_.survival(r);
      z[i] = s > 0.5 ? std_normal_quantile(law_.cdf(r)) : -std_normal_quantile(s);
    }
    log_pdf_.emplace(lf.begin(), lf.end(), lo_, step_);
    score_.emplace(z.begin(), z.end(), lo_, step_);
  }

  [[nodiscard]] double lo() const { return lo_; }
  [[nodiscard]] double hi() const { return hi_; }
  [[nodiscard]] int dim() const { return law_.dim(); }
  [[nodiscard]] double log_pdf(double t) const { return (*log_pdf_)(t); }   // log f_R(e^t)
  [[nodiscard]] double score(double t) const { return (*score_)(t); }       // Phi^{-1}(F_R(e^t))

 private:
  RadialDistribution<ArchimedeanGenerator> law_;
  double lo_ = 0.0, hi_ = 0.0, step_ = 0.0;
  std::optional<boost::math::interpolators::cardinal_cubic_b_spline<double>> log_pdf_, score_;
};

// Quadrature nodes of one coordinate V = psi(R S): weights carry every factor of the
// integrand except the copula density, so their sum is the marginal density of V.
struct AxisNodes {
  std::vector<double> weight;
  std::vector<double> score;
  double marginal = 0.0;
  bool clipped = false;
};

namespace detail {
inline std::vector<double> gaussian_scaled(const AxisNodes& a) {
  std::vector<double> out(a.weight.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.weight[i] * std::exp(0.5 * a.score[i] * a.score[i]);
  return out;
}
}  // namespace detail

// f_V(v) = |phi'(v)| int f_R(x/s) f_S(s) / s ds with x = phi(v) and f_S the Beta(1, d-1) density,
// integrated in t = log(x/s) = log r over [max(log x, lo), hi] with Gauss-Legendre nodes.
inline AxisNodes axis_nodes(const ArchimedeanGenerator& gen, const LogRadiusTable& tab, double v, int nodes) {
  AxisNodes out;
  if (!(v > 0.0 && v < 1.0)) throw ValidationError("parameter_domain", "density argument must lie in (0,1)");
  if (v < kClipEpsilon || v > 1.0 - kClipEpsilon) {
    v = std::clamp(v, kClipEpsilon, 1.0 - kClipEpsilon);
    out.clipped = true;
  }
  const double x = gen.phi(v);
  const double jac = std::abs(gen.phi_prime(v));
  const double lx = std::log(x);
  const double a = std::max(lx, tab.lo()), b = tab.hi();
  if (!(a < b) || !(jac > 0.0) || !std::isfinite(jac)) return out;
  const GaussRule& rule = gauss_legendre(nodes);
  const double h = 0.5 * (b - a), c = 0.5 * (b + a);
  const int dm2 = tab.dim() - 2;
  out.weight.resize(nodes);
  out.score.resize(nodes);
  for (int i = 0; i < nodes; ++i) {
    const double t = c + h * rule.nodes[i];
    // f_S(s) = (d-1)(1-s)^{d-2} with 1 - s = -expm1(log x - t)
    const double one_minus_s = -std::expm1(lx - t);
    const double fs = (dm2 + 1) * (dm2 > 0 ? std::pow(one_minus_s, dm2) : 1.0);
    const double w = rule.weights[i] * h * jac * fs * std::exp(tab.log_pdf(t));
    out.weight[i] = w;
    out.score[i] = tab.score(t);
    out.marginal += w;
  }
  // A node contributes at most weight * exp(z^2/2) / sqrt(1 - rho^2) times the other marginal,
  // so nodes far below the marginal in that measure are dropped.
  std::size_t keep = 0;
  for (int i = 0; i < nodes; ++i)
    if (out.weight[i] * std::exp(0.5 * out.score[i] * out.score[i]) >= kPruneRatio * out.marginal) {
      out.weight[keep] = out.weight[i];
      out.score[keep] = out.score[i];
      ++keep;
    }
  out.weight.resize(keep);
  out.score.resize(keep);
  return out;
}

// Bivariate mixture density from two axes and a Gaussian copula with correlation rho.
// The exponent is written as -(rho z1 - z2)^2 / (2(1-rho^2)) + z2^2 / 2, which is bounded above.
inline double pair_density_from_axes(const AxisNodes& a, const std::vector<double>& b_scaled, const AxisNodes& b,
                                     double rho) {
  if (a.weight.empty() || b.weight.empty()) return 0.0;
  if (rho == 0.0) return a.marginal * b.marginal;
  const double om = 1.0 - rho * rho;
  const double c = -0.5 / om;
  double total = 0.0;
  const std::size_t nb = b.weight.size();
  for (std::size_t i = 0; i < a.weight.size(); ++i) {
    const double m = rho * a.score[i];
    double s = 0.0;
    for (std::size_t j = 0; j < nb; ++j) {
      const double e = m - b.score[j];
      s += b_scaled[j] * std::exp(c * e * e);
    }
    total += a.weight[i] * s;
  }
  return total / std::sqrt(om);
}

// ---------------------------------------------------------------------------
// Mixture densities of coordinate subvectors taken one per cluster.

class RadialMixture {
 public:
  explicit RadialMixture(const ClusteredModelSpec& model, RadialFitConfig cfg = {}) : model_(model), cfg_(cfg) {
    model_.validate();
    cfg_.validate();
    for (int k = 0; k < model_.K(); ++k) tables_.emplace_back(model_.generators[k], model_.cluster_dim(k));
  }

  [[nodiscard]] const ClusteredModelSpec& model() const { return model_; }
  [[nodiscard]] const RadialFitConfig& config() const { return cfg_; }
  [[nodiscard]] int K() const { return model_.K(); }

  [[nodiscard]] AxisNodes axis(int k, double v, int nodes = 0) const {
    check_cluster(k);
    return axis_nodes(model_.generators[k], tables_[k], v, nodes > 0 ? nodes : cfg_.nodes);
  }

  [[nodiscard]] double marginal_density(int k, double v) const { return axis(k, v).marginal; }

  [[nodiscard]] double pair_density(int k, int l, double v1, double v2, double rho, bool* clipped = nullptr) const {
    check_rho(rho);
    const auto a = axis(k, v1), b = axis(l, v2);
    if (clipped) *clipped = a.clipped || b.clipped;
    return pair_density_from_axes(a, detail::gaussian_scaled(b), b, rho);
  }

  // K-variate density for one coordinate per cluster with correlation matrix corr (K <= 3).
  [[nodiscard]] double joint_density(std::span<const double> v, const Matrix& corr, int max_k = 3) const {
    const int K = model_.K();
    if (K > max_k) throw CapabilityError("joint mixture density needs K-fold tensor quadrature; K exceeds max_K");
    if (static_cast<int>(v.size()) != K || corr.rows() != K || corr.cols() != K)
      throw ValidationError("dimension_mismatch", "need one value per cluster and a K x K correlation matrix");
    std::vector<AxisNodes> ax;
    for (int k = 0; k < K; ++k) ax.push_back(axis(k, v[k]));
    return joint_from_axes(ax, corr);
  }

  // Tensor sum of weights times the Gaussian copula density of the node scores.
  [[nodiscard]] static double joint_from_axes(const std::vector<AxisNodes>& ax, const Matrix& corr) {
    const int K = static_cast<int>(ax.size());
    for (const auto& a : ax)
      if (a.weight.empty()) return 0.0;
    if (K == 1) return ax[0].marginal;
    Eigen::LLT<Matrix> llt(corr);
    if (llt.info() != Eigen::Success) throw ValidationError("not_positive_definite", "radial correlation matrix is not positive definite");
    const Matrix P = llt.solve(Matrix::Identity(K, K)) - Matrix::Identity(K, K);
    double logdet = 0.0;
    for (int k = 0; k < K; ++k) logdet += 2.0 * std::log(llt.matrixL()(k, k));
    if (P.cwiseAbs().maxCoeff() == 0.0) {
      double p = 1.0;
      for (const auto& a : ax) p *= a.marginal;
      return p;
    }
    const double norm = std::exp(-0.5 * logdet);
    std::vector<std::size_t> idx(K, 0);
    double total = 0.0;
    while (true) {
      double w = 1.0, quad = 0.0;
      for (int k = 0; k < K; ++k) {
        w *= ax[k].weight[idx[k]];
        for (int l = 0; l < K; ++l) quad += ax[k].score[idx[k]] * P(k, l) * ax[l].score[idx[l]];
      }
      total += w * std::exp(-0.5 * quad);
      int k = K - 1;
      while (k >= 0 && ++idx[k] == ax[k].weight.size()) idx[k--] = 0;
      if (k < 0) break;
    }
    return norm * total;
  }

 private:
  void check_cluster(int k) const {
    if (k < 0 || k >= model_.K()) throw ValidationError("index_out_of_range", "cluster index outside 1..K");
  }
  void check_rho(double rho) const {
    if (!(rho > -1.0 && rho < 1.0)) throw ValidationError("parameter_domain", "correlation must lie in (-1,1)");
  }

  ClusteredModelSpec model_;
  RadialFitConfig cfg_;
  std::vector<LogRadiusTable> tables_;
};

inline double pair_mixture_density(const ClusteredModelSpec& model, int k, int l, double v1, double v2, double rho,
                                   RadialFitConfig cfg = {}) {
  if (k == l) throw ValidationError("same_cluster", "the pair density needs two distinct clusters");
  return RadialMixture(model, cfg).pair_density(k, l, v1, v2, rho);
}

// ---------------------------------------------------------------------------
// Pairwise log-likelihood on pseudo-observations.

struct LogLik {
  double value = 0.0;
  std::size_t floored = 0;   // observations whose log density was floored
  std::size_t clipped = 0;   // observations evaluated on the clipped domain
};

inline void add_log_density(LogLik& ll, double f) {
  const double l = f > 0.0 ? std::log(f) : kLogFloor;
  if (l < kLogFloor || !(f > 0.0)) {
    ll.value += kLogFloor;
    ++ll.floored;
  } else {
    ll.value += l;
  }
}

// Quadrature nodes for every observation of one column; they do not depend on the correlation.
struct ColumnNodes {
  int column = 0;
  int cluster = 0;
  std::vector<AxisNodes> rows;
  std::vector<std::vector<double>> scaled;  // weights times exp(z^2 / 2)
};

inline ColumnNodes column_nodes(const RadialMixture& mix, const Matrix& pobs, int column) {
  if (column < 0 || column >= pobs.cols() || column >= mix.model().dim())
    throw ValidationError("index_out_of_range", "column index outside 1..d");
  ColumnNodes c;
  c.column = column;
  c.cluster = mix.model().partition.cluster_of()[column];
  const auto n = static_cast<std::size_t>(pobs.rows());
  c.rows.resize(n);
  c.scaled.resize(n);
  parallel_blocks(n, 32, [&](std::size_t, std::size_t lo, std::size_t hi) {
    for (std::size_t r = lo; r < hi; ++r) {
      c.rows[r] = mix.axis(c.cluster, pobs(static_cast<Eigen::Index>(r), column));
      c.scaled[r] = detail::gaussian_scaled(c.rows[r]);
    }
  });
  return c;
}

// Log-likelihood of a single variable pair from precomputed nodes.
inline LogLik pair_loglik(const ColumnNodes& a, const ColumnNodes& b, double rho) {
  if (a.rows.size() != b.rows.size()) throw ValidationError("dimension_mismatch", "columns differ in length");
  if (!(rho > -1.0 && rho < 1.0)) throw ValidationError("parameter_domain", "correlation must lie in (-1,1)");
  const std::size_t n = a.rows.size();
  std::vector<double> dens(n);
  parallel_blocks(n, 16, [&](std::size_t, std::size_t lo, std::size_t hi) {
    for (std::size_t r = lo; r < hi; ++r) dens[r] = pair_density_from_axes(a.rows[r], b.scaled[r], b.rows[r], rho);
  });
  LogLik ll;
  for (std::size_t r = 0; r < n; ++r) {
    add_log_density(ll, dens[r]);
    ll.clipped += a.rows[r].clipped || b.rows[r].clipped;
  }
  return ll;
}

namespace detail {
inline void check_pobs(const RadialMixture& mix, const Matrix& pobs) {
  if (pobs.cols() != mix.model().dim()) throw ValidationError("dimension_mismatch", "data columns differ from the model dimension");
  if (pobs.rows() < 1) throw ValidationError("insufficient_data", "no observations");
  for (Eigen::Index r = 0; r < pobs.rows(); ++r)
    for (Eigen::Index c = 0; c < pobs.cols(); ++c)
      if (!(pobs(r, c) > 0.0 && pobs(r, c) < 1.0))
        throw ValidationError("invalid_value", "pseudo-observations must lie in (0,1)");
}

inline void check_cluster_pair(const RadialMixture& mix, int k, int l) {
  if (k < 0 || l < 0 || k >= mix.K() || l >= mix.K()) throw ValidationError("index_out_of_range", "cluster index outside 1..K");
  if (k == l) throw ValidationError("same_cluster", "radial pairs need two distinct clusters");
}
}  // namespace detail

// Sum over observations and over all variable pairs in block k x block l.
inline LogLik pairwise_loglik(const RadialMixture& mix, const Matrix& pobs, int k, int l, double rho) {
  detail::check_pobs(mix, pobs);
  detail::check_cluster_pair(mix, k, l);
  LogLik total;
  const auto& blocks = mix.model().partition.blocks;
  std::vector<ColumnNodes> right;
  for (int j : blocks[l]) right.push_back(column_nodes(mix, pobs, j));
  for (int i : blocks[k]) {
    const auto left = column_nodes(mix, pobs, i);
    for (const auto& r : right) {
      const auto ll = pair_loglik(left, r, rho);
      total.value += ll.value;
      total.floored += ll.floored;
      total.clipped += ll.clipped;
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Pairwise correlation fits and their cluster averages.

struct PairRho {
  int i = 0, j = 0;          // columns
  double rho = 0.0;
  double loglik = 0.0;
  bool flat = false;         // likelihood did not vary across the search interval
  bool at_bound = false;
  std::size_t evaluations = 0;
};

inline PairRho fit_pair_rho(const ColumnNodes& a, const ColumnNodes& b, const RadialFitConfig& cfg) {
  cfg.validate();
  PairRho out;
  out.i = a.column;
  out.j = b.column;
  auto negll = [&](double r) {
    ++out.evaluations;
    return -pair_loglik(a, b, r).value;
  };
  const double f_lo = negll(cfg.lower), f_hi = negll(cfg.upper), f_mid = negll(0.5 * (cfg.lower + cfg.upper));
  if (std::max({f_lo, f_hi, f_mid}) - std::min({f_lo, f_hi, f_mid}) < 1e-10) {
    out.flat = true;
    out.loglik = -f_mid;
    return out;
  }
  std::uintmax_t iters = 200;
  const auto res = boost::math::tools::brent_find_minima(negll, cfg.lower, cfg.upper, 24, iters);
  out.rho = res.first;
  out.loglik = -res.second;
  if (f_lo <= res.second) {
    out.rho = cfg.lower;
    out.loglik = -f_lo;
  }
  if (f_hi <= -out.loglik) {
    out.rho = cfg.upper;
    out.loglik = -f_hi;
  }
  const double tol = 1e-6;
  out.at_bound = out.rho <= cfg.lower + tol || out.rho >= cfg.upper - tol;
  return out;
}

inline double cluster_pair_average(std::span<const double> rhos) {
  if (rhos.empty()) throw ValidationError("insufficient_data", "no pairwise estimates to average");
  double s = 0.0;
  for (double r : rhos) s += r;
  return s / static_cast<double>(rhos.size());
}

struct RadialFitResult {
  Matrix pairwise;               // d x d correlation estimates, NaN inside clusters
  Matrix rho_bar;                // K x K averaged correlations, unit diagonal
  std::vector<PairRho> pairs;    // every cross-cluster pair with its maximized log-likelihood
};

// Pairwise maximum composite likelihood, then averages per cluster pair.
inline RadialFitResult fit_radial(const RadialMixture& mix, const Matrix& pobs) {
  detail::check_pobs(mix, pobs);
  const auto& m = mix.model();
  const int K = m.K(), d = m.dim();
  if (K < 2) throw ValidationError("insufficient_clusters", "radial fitting needs at least two clusters");
  std::vector<ColumnNodes> cols;
  for (int c = 0; c < d; ++c) cols.push_back(column_nodes(mix, pobs, c));
  RadialFitResult out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.pairwise = Matrix::Constant(d, d, nan);
  out.rho_bar = Matrix::Identity(K, K);
  for (int k = 0; k < K; ++k)
    for (int l = k + 1; l < K; ++l) {
      std::vector<double> rs;
      for (int i : m.partition.blocks[k])
        for (int j : m.partition.blocks[l]) {
          auto p = fit_pair_rho(cols[i], cols[j], mix.config());
          out.pairwise(i, j) = out.pairwise(j, i) = p.rho;
          rs.push_back(p.rho);
          out.pairs.push_back(p);
        }
      out.rho_bar(k, l) = out.rho_bar(l, k) = cluster_pair_average(rs);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Full composite likelihood over one coordinate per cluster.

// Correlation matrix from its strict upper triangle in row order.
inline Matrix correlation_from_upper(std::span<const double> upper, int K) {
  if (static_cast<int>(upper.size()) != K * (K - 1) / 2)
    throw ValidationError("dimension_mismatch", "need K(K-1)/2 radial correlations");
  Matrix c = Matrix::Identity(K, K);
  int p = 0;
  for (int k = 0; k < K; ++k)
    for (int l = k + 1; l < K; ++l) {
      if (!(upper[p] > -1.0 && upper[p] < 1.0)) throw ValidationError("parameter_domain", "correlations must lie in (-1,1)");
      c(k, l) = c(l, k) = upper[p++];
    }
  return c;
}

inline LogLik full_composite_loglik(const RadialMixture& mix, const Matrix& pobs, std::span<const double> upper,
                                    int max_k = 3) {
  detail::check_pobs(mix, pobs);
  const auto& m = mix.model();
  const int K = m.K();
  if (K > max_k) throw CapabilityError("full composite likelihood needs K-fold tensor quadrature; K exceeds max_K");
  const Matrix corr = correlation_from_upper(upper, K);
  std::vector<ColumnNodes> cols;
  for (int c = 0; c < m.dim(); ++c) cols.push_back(column_nodes(mix, pobs, c));
  // every index vector with one column per cluster
  std::vector<std::vector<int>> tuples{{}};
  for (int k = 0; k < K; ++k) {
    std::vector<std::vector<int>> next;
    for (const auto& t : tuples)
      for (int c : m.partition.blocks[k]) {
        auto u = t;
        u.push_back(c);
        next.push_back(std::move(u));
      }
    tuples = std::move(next);
  }
  const auto n = static_cast<std::size_t>(pobs.rows());
  std::vector<double> dens(n * tuples.size());
  parallel_blocks(n, 4, [&](std::size_t, std::size_t lo, std::size_t hi) {
    std::vector<AxisNodes> ax(K);
    for (std::size_t r = lo; r < hi; ++r)
      for (std::size_t t = 0; t < tuples.size(); ++t) {
        for (int k = 0; k < K; ++k) ax[k] = cols[tuples[t][k]].rows[r];
        dens[r * tuples.size() + t] = RadialMixture::joint_from_axes(ax, corr);
      }
  });
  LogLik ll;
  for (double f : dens) add_log_density(ll, f);
  return ll;
}

}  // namespace archimax
