#pragma once
// Extremal behaviour of clustered Archimax models: tail classes of the
// radial variables, the limiting stdf and its asymptotic-independence
// form, tail coefficients and empirical chi-curves.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "generator.hpp"
#include "rng.hpp"
#include "sampler.hpp"
#include "stdf.hpp"

namespace archimax {

// D1: 1/R heavy tailed with index rho in (0,1). D2: E[1/R^{1+eps}] finite.
enum class TailClass { D1, D2, Unsupported };

inline std::string_view to_string(TailClass c) {
  switch (c) {
    case TailClass::D1: return "D1";
    case TailClass::D2: return "D2";
    case TailClass::Unsupported: return "unsupported";
  }
  return "?";
}

struct ClusterClass {
  TailClass cls = TailClass::D2;
  double rho = 0.0;  // D1 only
  double b = 0.0;    // E[Z^{-rho}], Z ~ Beta(1, d-1); D1 only
};

// E[Z^{-rho}] for Z ~ Beta(1, d-1): (d-1) B(1-rho, d-1).
inline double beta_rho_moment(double rho, int d) {
  if (!(rho > 0.0 && rho < 1.0)) throw ValidationError("parameter_domain", "rho must lie in (0,1)");
  if (d < 2) throw ValidationError("parameter_domain", "cluster dimension must be >= 2");
  const double dm = d - 1.0;
  return dm * std::exp(std::lgamma(1.0 - rho) + std::lgamma(dm) - std::lgamma(d - rho));
}

inline ClusterClass classify_cluster(const ArchimedeanGenerator& g) {
  ClusterClass c;
  switch (g.family()) {
    case Family::Clayton:
    case Family::Frank: c.cls = TailClass::D2; break;
    case Family::Joe:
      if (g.theta() > 1.0) {
        c.cls = TailClass::D1;
        c.rho = 1.0 / g.theta();
      } else {
        c.cls = TailClass::Unsupported;
      }
      break;
  }
  return c;
}

inline std::vector<ClusterClass> classify_model(const ClusteredModelSpec& m) {
  std::vector<ClusterClass> out;
  for (int k = 0; k < m.K(); ++k) {
    auto c = classify_cluster(m.generators[k]);
    if (c.cls == TailClass::D1) c.b = beta_rho_moment(c.rho, m.cluster_dim(k));
    out.push_back(c);
  }
  return out;
}

inline void require_supported(const std::vector<ClusterClass>& cls) {
  for (std::size_t k = 0; k < cls.size(); ++k)
    if (cls[k].cls == TailClass::Unsupported)
      throw CapabilityError("cluster " + std::to_string(k + 1) +
                            " is on the boundary between heavy and light radial tails (Joe theta = 1); its limiting "
                            "stdf is only conjectured");
}

inline std::vector<int> d1_clusters(const std::vector<ClusterClass>& cls) {
  std::vector<int> out;
  for (std::size_t k = 0; k < cls.size(); ++k)
    if (cls[k].cls == TailClass::D1) out.push_back(static_cast<int>(k));
  return out;
}

// W-sampler for the D1 clusters implied by the radial copula: Gumbel gives
// the logistic generator with the same parameter, Gaussian (|rho| < 1) and
// independence give asymptotic independence.
inline WSampler derived_w_sampler(const ClusteredModelSpec& m, int dim) {
  if (m.radial.kind == RadialCopulaSpec::Kind::Gumbel) return logistic_w_sampler(m.radial.vartheta, dim);
  return independence_w_sampler(dim);
}

// Stdf of the limit of 1/R over all K clusters under the same rule.
inline Stdf derived_radial_stdf(const ClusteredModelSpec& m) {
  if (m.radial.kind == RadialCopulaSpec::Kind::Gumbel) return Stdf::logistic(m.radial.vartheta, m.K());
  return Stdf::independence(m.K());
}

namespace detail {
inline std::vector<double> cluster_slice(const ClusteredModelSpec& m, std::span<const double> x, int k) {
  std::vector<double> out;
  for (int i : m.partition.blocks[k]) out.push_back(x[i]);
  return out;
}

inline void check_stdf_argument(const ClusteredModelSpec& m, std::span<const double> x) {
  if (static_cast<int>(x.size()) != m.dim()) throw ValidationError("dimension_mismatch", "x length differs from d");
  for (double v : x)
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("parameter_domain", "x must be finite and nonnegative");
}
}  // namespace detail

struct LimitStdfReport {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n_mc = 0;
  std::vector<ClusterClass> classes;
};

// Limiting stdf of the clustered model:
//   E max_{k in D1, i} x_ki W_k / (b_k S_ki^rho_k) + sum_{k in D2} ell_k(x_k).
// The expectation uses the control variate sum Y - max Y, whose mean is
// known since E Y_ki = x_ki.
inline LimitStdfReport limit_stdf_eval(const ClusteredModelSpec& m, std::span<const double> x, std::size_t n_mc,
                                       std::uint64_t seed, const std::optional<WSampler>& w_override = std::nullopt) {
  m.validate();
  detail::check_stdf_argument(m, x);
  if (n_mc < 2) throw ValidationError("parameter_domain", "n_mc must be >= 2");
  LimitStdfReport rep;
  rep.classes = classify_model(m);
  require_supported(rep.classes);
  rep.n_mc = n_mc;
  double exact = 0.0;
  for (int k = 0; k < m.K(); ++k)
    if (rep.classes[k].cls == TailClass::D2) {
      const auto xk = detail::cluster_slice(m, x, k);
      exact += m.stdfs[k](xk);
    }
  const auto d1 = d1_clusters(rep.classes);
  const int K1 = static_cast<int>(d1.size());
  const WSampler ws = w_override ? *w_override : derived_w_sampler(m, std::max(K1, 1));
  if (w_override && ws.dim != K1) throw ValidationError("dimension_mismatch", "W-sampler dimension must equal the D1 cluster count");

  // Each cluster maximum A_k = (W_k / b_k) radius^{-c} max_i x_i dir_i^{-c} with c = rho / vartheta.
  // Two control variates keep the variance finite: sum_k A_k - max_k A_k across clusters, and
  // sum_i x_i dir_i^{-c} - max_i inside a cluster, whose terms have mean x_i E[dir^{-c}] (Beta(1, d-1) margins).
  struct Active {
    int w;                       // W coordinate
    int d;                       // cluster dimension
    double rho, b;
    double c = 0.0;              // exponent on the simplex direction
    double beta = 1.0;           // E[dir_i^{-c}]
    std::vector<double> x;       // cluster slice
    std::vector<int> nz;         // nonzero positions
    std::optional<SimplexSampler> s;
  };
  std::vector<Active> act;
  double xsum = 0.0;
  for (int a = 0; a < K1; ++a) {
    const int k = d1[a];
    Active c{a, m.cluster_dim(k), rep.classes[k].rho, rep.classes[k].b, 0.0, 1.0, detail::cluster_slice(m, x, k), {}, {}};
    for (int i = 0; i < c.d; ++i)
      if (c.x[i] > 0.0) {
        c.nz.push_back(i);
        xsum += c.x[i];
      }
    if (c.nz.empty()) continue;
    // one active coordinate needs only its Beta(1, d-1) margin
    if (c.nz.size() > 1) {
      c.s.emplace(m.stdfs[k]);
      c.c = c.rho / c.s->vartheta();
      c.beta = beta_rho_moment(c.c, c.d);
    }
    act.push_back(std::move(c));
  }
  if (act.empty()) {
    rep.estimate = exact;
    return rep;
  }
  auto mom = detail::mc_moments(n_mc, seed, [&](Engine& g) {
    double wb[64];
    std::vector<double> wh;
    std::span<double> w;
    if (ws.dim <= 64) {
      w = std::span<double>(wb, ws.dim);
    } else {
      wh.resize(ws.dim);
      w = wh;
    }
    ws.draw(g, w);
    double sum = 0.0, mx = 0.0, inner = 0.0;
    std::vector<double> dir;
    for (const auto& c : act) {
      const double scale = w[c.w] / c.b;
      if (!c.s) {
        if (scale == 0.0) continue;
        const double z = -std::expm1(std::log(uniform01(g)) / (c.d - 1.0));
        const double y = c.x[c.nz[0]] * scale * std::pow(z, -c.rho);
        sum += y;
        mx = std::max(mx, y);
        continue;
      }
      dir.resize(c.d);
      double radius = 1.0;
      c.s->draw_split(g, dir, radius);
      double tot = 0.0, top = 0.0;
      for (int i : c.nz) {
        const double t = c.x[i] * std::pow(dir[i], -c.c);
        tot += t;
        top = std::max(top, t);
      }
      inner += (tot - top) / c.beta;
      if (scale == 0.0) continue;
      const double y = scale * std::pow(radius, -c.c) * top;
      sum += y;
      mx = std::max(mx, y);
    }
    return inner + (sum - mx);
  });
  const auto r = mom.result();
  rep.estimate = exact + xsum - r.estimate;
  rep.std_error = r.std_error;
  return rep;
}

// Asymptotic-independence form: sum_{D1} ell_k^{rho_k}(x_k^{1/rho_k}) + sum_{D2} ell_k(x_k).
inline double limit_stdf_ai(const ClusteredModelSpec& m, std::span<const double> x) {
  m.validate();
  detail::check_stdf_argument(m, x);
  const auto cls = classify_model(m);
  require_supported(cls);
  double s = 0.0;
  for (int k = 0; k < m.K(); ++k) {
    const auto xk = detail::cluster_slice(m, x, k);
    s += cls[k].cls == TailClass::D1 ? alpha_transform(m.stdfs[k], cls[k].rho)(xk) : m.stdfs[k](xk);
  }
  return s;
}

struct OrderingCheck {
  double lhs = 0.0, rhs = 0.0, rhs_std_error = 0.0;
};

// lhs = ell_{1/R}(x'), rhs = limiting stdf at x with x' placed on the first
// variable of each cluster. x' has one entry per cluster and must vanish on
// clusters outside D1.
inline OrderingCheck check_radial_ordering(const ClusteredModelSpec& m, std::span<const double> xr, std::size_t n_mc,
                                           std::uint64_t seed, const std::optional<Stdf>& radial_stdf = std::nullopt,
                                           const std::optional<WSampler>& w_override = std::nullopt) {
  m.validate();
  if (static_cast<int>(xr.size()) != m.K()) throw ValidationError("dimension_mismatch", "x' needs one entry per cluster");
  const auto cls = classify_model(m);
  require_supported(cls);
  for (int k = 0; k < m.K(); ++k)
    if (cls[k].cls != TailClass::D1 && xr[k] != 0.0)
      throw ValidationError("parameter_domain", "x' must vanish on clusters outside D1 (cluster " + std::to_string(k + 1) + ")");
  const Stdf lr = radial_stdf ? *radial_stdf : derived_radial_stdf(m);
  if (lr.dim() != m.K()) throw ValidationError("dimension_mismatch", "radial stdf needs dimension K");
  std::vector<double> x(m.dim(), 0.0);
  for (int k = 0; k < m.K(); ++k) x[m.partition.blocks[k][0]] = xr[k];
  OrderingCheck out;
  out.lhs = lr(xr);
  const auto rep = limit_stdf_eval(m, x, n_mc, seed, w_override);
  out.rhs = rep.estimate;
  out.rhs_std_error = rep.std_error;
  return out;
}

struct TailCoefficient {
  double lambda = 0.0;
  double std_error = 0.0;
  bool closed_form = true;
};

// lambda_ij = 2 - ell(1,1) of the limiting bivariate margin.
inline TailCoefficient pairwise_limit_lambda(const ClusteredModelSpec& m, int i, int j, std::size_t n_mc, std::uint64_t seed) {
  m.validate();
  if (i < 0 || j < 0 || i >= m.dim() || j >= m.dim() || i == j)
    throw ValidationError("index_out_of_range", "pair indices must be distinct and inside 1..d");
  const auto cls = classify_model(m);
  require_supported(cls);
  const auto ck = m.partition.cluster_of();
  TailCoefficient out;
  if (ck[i] == ck[j]) {
    const int k = ck[i];
    const auto pos = m.partition.position_of();
    const std::vector<int> idx{pos[i], pos[j]};
    const double a = m.generators[k].attractor_index();
    out.lambda = std::clamp(2.0 - alpha_transform(m.stdfs[k], a).margin(idx)({1.0, 1.0}), 0.0, 1.0);
    return out;
  }
  std::vector<double> x(m.dim(), 0.0);
  x[i] = x[j] = 1.0;
  if (m.radial.kind != RadialCopulaSpec::Kind::Gumbel) {
    out.lambda = std::clamp(2.0 - limit_stdf_ai(m, x), 0.0, 1.0);
    return out;
  }
  const auto rep = limit_stdf_eval(m, x, n_mc, seed);
  out.lambda = std::clamp(2.0 - rep.estimate, 0.0, 1.0);
  out.std_error = rep.std_error;
  out.closed_form = false;
  return out;
}

// ---------------------------------------------------------------------------
// chi(q) = 2 - log P(U_i < q, U_j < q) / log q.

struct ChiPoint {
  double q = 0.0, chi = 0.0, lo = 0.0, hi = 0.0;
  std::size_t joint = 0;  // number of joint exceedances below q
  bool degenerate = false;
};

// Delta-method 95% interval: se(chi) = sqrt(p(1-p)/n) / (p |log q|).
inline ChiPoint chi_point(std::size_t count, std::size_t n, double q) {
  ChiPoint c;
  c.q = q;
  c.joint = count;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (count == 0) {
    c.chi = c.lo = c.hi = nan;
    c.degenerate = true;
    return c;
  }
  const double p = static_cast<double>(count) / static_cast<double>(n);
  const double lq = std::log(q);
  c.chi = 2.0 - std::log(p) / lq;
  const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(n)) / (p * std::abs(lq));
  c.lo = c.chi - 1.959963984540054 * se;
  c.hi = c.chi + 1.959963984540054 * se;
  c.degenerate = count == n;
  return c;
}

inline std::vector<ChiPoint> chi_curve_empirical(const Matrix& data, int i, int j, std::span<const double> q_grid) {
  if (i < 0 || j < 0 || i >= data.cols() || j >= data.cols())
    throw ValidationError("index_out_of_range", "column index outside the data");
  const auto n = static_cast<std::size_t>(data.rows());
  if (n == 0) throw ValidationError("insufficient_data", "empty sample");
  for (Eigen::Index r = 0; r < data.rows(); ++r)
    if (!(data(r, i) > 0.0 && data(r, i) < 1.0 && data(r, j) > 0.0 && data(r, j) < 1.0))
      throw ValidationError("parameter_domain", "data must be on the uniform scale (0,1)");
  std::vector<ChiPoint> out;
  for (double q : q_grid) {
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("parameter_domain", "q must lie in (0,1)");
    std::size_t cnt = 0;
    for (Eigen::Index r = 0; r < data.rows(); ++r) cnt += (data(r, i) < q && data(r, j) < q);
    out.push_back(chi_point(cnt, n, q));
  }
  return out;
}

// Model chi-curve by re-simulation.
inline std::vector<ChiPoint> chi_curve_simulated(const ClusteredModelSpec& m, int i, int j, std::span<const double> q_grid,
                                                 std::size_t n, std::uint64_t seed) {
  const auto u = sample_clustered(m, n, seed);
  return chi_curve_empirical(u, i, j, q_grid);
}

}  // namespace archimax
