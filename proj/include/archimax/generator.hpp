#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <vector>
#include <cmath>
#include <concepts>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>

#include "errors.hpp"

namespace archimax {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Highest derivative order with a closed form. Cluster dimensions above
// this need derivatives we do not provide.
inline constexpr int kMaxDerivativeOrder = 40;

namespace detail {

// Stirling numbers of the second kind S(m, k), 0 <= k <= m <= kMaxDerivativeOrder.
inline const std::array<std::array<double, kMaxDerivativeOrder + 1>, kMaxDerivativeOrder + 1>& stirling2() {
  static const auto table = [] {
    std::array<std::array<double, kMaxDerivativeOrder + 1>, kMaxDerivativeOrder + 1> t{};
    t[0][0] = 1.0;
    for (int m = 1; m <= kMaxDerivativeOrder; ++m)
      for (int k = 1; k <= m; ++k) t[m][k] = k * t[m - 1][k] + t[m - 1][k - 1];
    return t;
  }();
  return table;
}

inline void check_order(int m) {
  if (m < 0) throw ValidationError("parameter_domain", "derivative order must be >= 0");
  if (m > kMaxDerivativeOrder)
    throw CapabilityError("derivative order " + std::to_string(m) + " exceeds supported maximum " +
                          std::to_string(kMaxDerivativeOrder));
}

inline double log_factorial(int n) { return std::lgamma(n + 1.0); }

inline boost::math::quadrature::tanh_sinh<double>& tanh_sinh_integrator() {
  thread_local boost::math::quadrature::tanh_sinh<double> integrator(12);
  return integrator;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Generator concept: anything with psi, its derivatives, the right end of its
// support and the mass the radial law puts at that end.

template <class G>
concept Generator = requires(const G& g, double x, int m) {
  { g.psi(x) } -> std::convertible_to<double>;
  { g.derivative(m, x) } -> std::convertible_to<double>;
  { g.x_psi() } -> std::convertible_to<double>;
  { g.radial_atom(m) } -> std::convertible_to<double>;
};

// ---------------------------------------------------------------------------
// Parametric Archimedean generators.

enum class Family { Clayton, Joe, Frank };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::Clayton: return "clayton";
    case Family::Joe: return "joe";
    case Family::Frank: return "frank";
  }
  return "?";
}

inline Family parse_family(std::string_view s) {
  if (s == "clayton") return Family::Clayton;
  if (s == "joe") return Family::Joe;
  if (s == "frank") return Family::Frank;
  throw ValidationError("unknown_family", "unknown generator family '" + std::string(s) + "'");
}

// Lower end of the admissible parameter range for each family.
inline bool theta_in_domain(Family f, double theta) {
  if (!std::isfinite(theta)) return false;
  switch (f) {
    case Family::Clayton: return theta > 0.0;
    case Family::Joe: return theta >= 1.0;
    case Family::Frank: return theta > 0.0;
  }
  return false;
}

class ArchimedeanGenerator {
 public:
  ArchimedeanGenerator(Family family, double theta) : family_(family), theta_(theta) {
    if (!theta_in_domain(family, theta))
      throw ValidationError("parameter_domain",
                            std::string(to_string(family)) + " theta out of domain: " + std::to_string(theta));
  }

  [[nodiscard]] Family family() const { return family_; }
  [[nodiscard]] double theta() const { return theta_; }
  [[nodiscard]] double x_psi() const { return kInf; }
  [[nodiscard]] double radial_atom(int) const { return 0.0; }

  [[nodiscard]] double psi(double x) const {
    if (x < 0.0 || std::isnan(x)) throw ValidationError("parameter_domain", "psi requires x >= 0");
    if (x == kInf) return 0.0;
    switch (family_) {
      case Family::Clayton: return std::exp(-std::log1p(theta_ * x) / theta_);
      case Family::Joe: {
        // 1 - (1 - e^{-x})^{1/theta}
        const double a = 1.0 / theta_;
        return -std::expm1(a * std::log1p(-std::exp(-x)));
      }
      case Family::Frank: {
        const double z = -std::expm1(-theta_) * std::exp(-x);
        return -std::log1p(-z) / theta_;
      }
    }
    return 0.0;
  }

  // Inverse of psi on (0, 1]; phi(0) is x_psi (= +inf).
  [[nodiscard]] double phi(double u) const {
    if (!(u >= 0.0 && u <= 1.0)) throw ValidationError("parameter_domain", "phi requires u in (0,1]");
    if (u == 0.0) return x_psi();
    if (u == 1.0) return 0.0;
    switch (family_) {
      case Family::Clayton: return std::expm1(-theta_ * std::log(u)) / theta_;
      case Family::Joe: {
        // -log(1 - (1-u)^theta)
        const double w = std::exp(theta_ * std::log1p(-u));
        return w < 0.5 ? -std::log1p(-w) : -std::log(-std::expm1(theta_ * std::log1p(-u)));
      }
      case Family::Frank: {
        const double q = std::expm1(-theta_ * u) / std::expm1(-theta_);
        if (q < 0.5) return -std::log(q);
        // q = 1 + e^{-theta u} expm1(-theta (1-u)) / (-expm1(-theta)), small correction near u = 1
        return -std::log1p(std::exp(-theta_ * u) * std::expm1(-theta_ * (1.0 - u)) / -std::expm1(-theta_));
      }
    }
    return 0.0;
  }

  // d phi / du, negative on (0,1).
  [[nodiscard]] double phi_prime(double u) const {
    if (!(u > 0.0 && u <= 1.0)) throw ValidationError("parameter_domain", "phi' requires u in (0,1]");
    switch (family_) {
      case Family::Clayton: return -std::exp(-(theta_ + 1.0) * std::log(u));
      case Family::Joe: {
        if (u == 1.0) return theta_ == 1.0 ? -1.0 : 0.0;
        const double lw = theta_ * std::log1p(-u);
        return -theta_ * std::exp(lw - std::log1p(-u)) / -std::expm1(lw);
      }
      case Family::Frank: return theta_ * std::exp(-theta_ * u) / std::expm1(-theta_ * u);
    }
    return 0.0;
  }

  // phi(t) / phi'(t): the non-positive function behind the Kendall
  // distribution K(t) = t - phi(t)/phi'(t) of the Archimedean copula.
  [[nodiscard]] double kendall_ratio(double t) const {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    switch (family_) {
      case Family::Clayton: return -t * (-std::expm1(theta_ * std::log(t))) / theta_;
      case Family::Joe: {
        // (1-w)(1-t) log(1-w) / (theta w), w = (1-t)^theta
        const double lw = theta_ * std::log1p(-t);
        const double w = std::exp(lw);
        const double l1w_over_w = w < 1e-8 ? -1.0 - 0.5 * w : std::log(-std::expm1(lw)) / w;
        return -std::expm1(lw) * (1.0 - t) * l1w_over_w / theta_;
      }
      case Family::Frank: return -phi(t) * std::expm1(theta_ * t) / theta_;
    }
    return 0.0;
  }

  // psi^{(m)}(x), with sign. m = 0 gives psi.
  [[nodiscard]] double derivative(int m, double x) const { return scaled_derivative(m, x, 0.0); }

  // psi^{(m)}(x) * exp(log_scale), with the scale folded into the exponent so
  // that r^j psi^{(j)}(r) stays finite where psi^{(j)} alone overflows.
  [[nodiscard]] double scaled_derivative(int m, double x, double log_scale) const {
    detail::check_order(m);
    if (m == 0) return psi(x) * std::exp(log_scale);
    if (x < 0.0) throw ValidationError("parameter_domain", "derivative requires x >= 0");
    if (x == kInf) return 0.0;
    const double sign = (m % 2 == 0) ? 1.0 : -1.0;
    const auto& S = detail::stirling2();
    switch (family_) {
      case Family::Clayton: {
        double lp = 0.0;
        for (int j = 0; j < m; ++j) lp += std::log1p(j * theta_);
        return sign * std::exp(lp - (1.0 / theta_ + m) * std::log1p(theta_ * x) + log_scale);
      }
      case Family::Joe: {
        // (-1)^m sum_k S(m,k) y^k a prod_{i<k}(i - a) (1-y)^{a-k}, y = e^{-x}
        const double a = 1.0 / theta_;
        if (x == 0.0) return a == 1.0 ? sign * std::exp(log_scale) : sign * kInf;
        const double logy = -x;
        const double log1my = std::log(-std::expm1(-x));
        double s = 0.0, coef = a;
        for (int k = 1; k <= m; ++k) {
          if (k > 1) coef *= (k - 1) - a;
          if (coef == 0.0) break;
          s += S[m][k] * coef * std::exp(k * logy + (a - k) * log1my + log_scale);
        }
        return sign * s;
      }
      case Family::Frank: {
        // (-1)^m / theta * sum_k k! S(m,k+1) (z/(1-z))^{k+1}
        const double z = -std::expm1(-theta_) * std::exp(-x);
        const double q = z / (1.0 - z);
        double s = 0.0, fact = 1.0, qp = q;
        for (int k = 0; k < m; ++k) {
          if (k > 0) fact *= k;
          s += fact * S[m][k + 1] * qp;
          qp *= q;
        }
        return sign * s / theta_ * std::exp(log_scale);
      }
    }
    return 0.0;
  }

  // Index of the extreme-value attractor ell^alpha(x^{1/alpha}): the
  // regular-variation index of 1 - psi near zero.
  [[nodiscard]] double attractor_index() const { return family_ == Family::Joe ? 1.0 / theta_ : 1.0; }

 private:
  Family family_;
  double theta_;
};

// psi(x) = (1 - x/c)_+^{d-1}: the Williamson transform of a point mass at c.
class PointMassGenerator {
 public:
  PointMassGenerator(double c, int d) : c_(c), d_(d) {
    if (!(c > 0.0) || d < 2) throw ValidationError("parameter_domain", "point mass needs c > 0, d >= 2");
  }
  [[nodiscard]] double psi(double x) const { return derivative(0, x); }
  [[nodiscard]] double derivative(int m, double x) const {
    detail::check_order(m);
    if (x >= c_ || m > d_ - 1) return 0.0;
    double f = 1.0;
    for (int j = 0; j < m; ++j) f *= -(d_ - 1.0 - j) / c_;
    return f * std::pow(1.0 - x / c_, d_ - 1 - m);
  }
  [[nodiscard]] double x_psi() const { return c_; }
  [[nodiscard]] double radial_atom(int d) const { return d == d_ ? 1.0 : 0.0; }

 private:
  double c_;
  int d_;
};

// psi(x) = (1 - x^{1/vartheta})_+^{d-1}. A vector T with P(T > t) = psi(sum t)
// gives S = T^{1/vartheta} with P(S > s) = (1 - ell(s))_+^{d-1} for the
// logistic stdf ell. The radial law lives on (0, 1] with an atom
// vartheta^{-(d-1)} at 1.
class SimplexRadialGenerator {
 public:
  SimplexRadialGenerator(double vartheta, int d) : a_(1.0 / vartheta), d_(d) {
    if (!(vartheta >= 1.0) || d < 2) throw ValidationError("parameter_domain", "need vartheta >= 1, d >= 2");
    binom_.resize(d);
    for (int k = 0; k < d; ++k) binom_[k] = std::exp(std::lgamma(d) - std::lgamma(k + 1.0) - std::lgamma(d - k + 0.0));
  }
  [[nodiscard]] double psi(double x) const {
    if (x >= 1.0) return 0.0;
    return std::pow(1.0 - std::pow(x, a_), d_ - 1);
  }
  [[nodiscard]] double derivative(int m, double x) const { return scaled_derivative(m, x, 0.0); }
  [[nodiscard]] double scaled_derivative(int m, double x, double log_scale) const {
    detail::check_order(m);
    if (x >= 1.0) return 0.0;
    if (m == 0) return psi(x) * std::exp(log_scale);
    // binomial expansion sum_k C(d-1,k) (-1)^k x^{a k}, differentiated termwise
    const double lx = std::log(x);
    double s = 0.0;
    for (int k = 1; k < d_; ++k) {
      const double e = a_ * k;
      double ff = 1.0;
      for (int j = 0; j < m; ++j) ff *= e - j;
      if (ff == 0.0) continue;
      s += ((k % 2) ? -1.0 : 1.0) * binom_[k] * ff * std::exp((e - m) * lx + log_scale);
    }
    return s;
  }
  [[nodiscard]] double x_psi() const { return 1.0; }
  [[nodiscard]] double radial_atom(int d) const { return d == d_ ? std::pow(a_, d_ - 1) : 0.0; }

 private:
  double a_;
  int d_;
  std::vector<double> binom_;
};

// ---------------------------------------------------------------------------
// Radial law: the inverse Williamson d-transform of a generator.

template <Generator G>
class RadialDistribution {
 public:
  RadialDistribution(G gen, int d) : gen_(std::move(gen)), d_(d) {
    if (d < 2) throw ValidationError("parameter_domain", "radial dimension must be >= 2");
    if (d > kMaxDerivativeOrder) throw CapabilityError("cluster dimension too large for closed-form derivatives");
    atom_ = gen_.radial_atom(d);
    log_fact_dm1_ = detail::log_factorial(d - 1);
  }

  [[nodiscard]] const G& generator() const { return gen_; }
  [[nodiscard]] int dim() const { return d_; }
  [[nodiscard]] double upper_end() const { return gen_.x_psi(); }
  [[nodiscard]] double atom() const { return atom_; }

  // P(R > r) = sum_{j<d} (-r)^j psi^{(j)}(r) / j!
  [[nodiscard]] double survival(double r) const {
    if (!(r > 0.0)) return 1.0;
    if (r >= gen_.x_psi()) return 0.0;
    const double lr = std::log(r);
    double s = 0.0;
    for (int j = 0; j < d_; ++j) {
      const double t = scaled(j, r, j * lr - detail::log_factorial(j));
      s += (j % 2) ? -t : t;
    }
    return std::clamp(s, 0.0, 1.0);
  }

  // Below the upper decile the complement loses relative accuracy, so the
  // lower tail is integrated from the density instead.
  [[nodiscard]] double cdf(double r) const {
    if (!(r > 0.0)) return 0.0;
    const double s = survival(r);
    if (s < 0.9) return 1.0 - s;
    return lower_mass(r);
  }

  // Density of the absolutely continuous part.
  [[nodiscard]] double pdf(double r) const {
    if (!(r > 0.0) || r >= gen_.x_psi()) return 0.0;
    if constexpr (std::same_as<G, ArchimedeanGenerator>) {
      if (gen_.family() == Family::Clayton) return clayton_pdf(r);
    }
    return pdf_generic(r);
  }

  // (-1)^d r^{d-1} psi^{(d)}(r) / (d-1)!
  [[nodiscard]] double pdf_generic(double r) const {
    if (!(r > 0.0) || r >= gen_.x_psi()) return 0.0;
    const double v = scaled(d_, r, (d_ - 1) * std::log(r) - log_fact_dm1_);
    return std::max((d_ % 2) ? -v : v, 0.0);
  }

  // inf{r : F(r) >= p}
  [[nodiscard]] double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("parameter_domain", "quantile requires p in (0,1)");
    return inverse_survival(1.0 - p, p);
  }

  // inf{r : P(R > r) <= p}. Solving against the survival keeps relative
  // precision in the upper tail, which is where the sampler lives.
  [[nodiscard]] double survival_quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("parameter_domain", "survival quantile requires p in (0,1)");
    return inverse_survival(p, 1.0 - p);
  }

  // Log-radius interval known to contain the root.
  struct Bracket {
    double lo, hi;
  };

  // Same as survival_quantile(p) with the complement q = 1 - p supplied by
  // the caller, who can often compute it without cancellation. An optional
  // bracket in log r skips the search.
  [[nodiscard]] double inverse_survival(double p, double q, const Bracket* hint = nullptr) const {
    const double xe = gen_.x_psi();
    if (!(q > 0.0)) return 0.0;
    if (!(p > 0.0)) return xe;
    if (atom_ > 0.0 && p < atom_) return xe;
    const bool use_lower = q < 1e-6;
    auto g = [&](double t) {
      const double r = std::exp(t);
      return use_lower ? cdf(r) - q : p - survival(r);
    };
    double lo = 0.0, hi = 0.0, glo = 0.0, ghi = 0.0;
    bool bracketed = false;
    if (hint) {
      lo = hint->lo;
      hi = hint->hi;
      glo = g(lo);
      ghi = g(hi);
      bracketed = glo <= 0.0 && ghi > 0.0;
    }
    if (!bracketed) search_bracket(g, p, lo, hi, glo, ghi);
    if (glo == 0.0) return std::exp(lo);
    std::uintmax_t max_iter = 200;
    auto tol = [](double a, double b) { return std::abs(b - a) < 4e-13; };
    auto [a, b] = boost::math::tools::toms748_solve(g, lo, hi, glo, ghi, tol, max_iter);
    if (max_iter >= 200 && std::abs(b - a) > 1e-9)
      throw NumericalError("radial quantile: root refinement did not converge, p=" + std::to_string(p));
    return std::exp(0.5 * (a + b));
  }

 private:
  // Expands an interval in log r until g changes sign.
  template <class F>
  void search_bracket(F& g, double p, double& lo, double& hi, double& glo, double& ghi) const {
    const double xe = gen_.x_psi();
    const double t_end = std::isfinite(xe) ? std::log(xe) : 700.0;
    lo = hi = std::isfinite(xe) ? t_end - 1.0 : 0.0;
    glo = ghi = g(lo);
    int it = 0;
    while (glo > 0.0) {
      hi = lo;
      ghi = glo;
      lo -= 2.0 + 0.5 * it;
      glo = g(lo);
      if (++it > 200 || lo < -745.0)
        throw NumericalError("radial quantile: cannot bracket lower end, p=" + std::to_string(p));
    }
    it = 0;
    while (ghi <= 0.0) {
      lo = hi;
      glo = ghi;
      hi = std::min(hi + 2.0 + 0.5 * it, t_end);
      ghi = (hi >= t_end && std::isfinite(xe)) ? p : g(hi);
      if (hi >= t_end && !std::isfinite(xe) && ghi <= 0.0)
        throw NumericalError("radial quantile: cannot bracket upper end, p=" + std::to_string(p));
      if (++it > 400) throw NumericalError("radial quantile: bracketing budget exhausted");
    }
  }

  double scaled(int m, double x, double log_scale) const {
    if constexpr (requires { gen_.scaled_derivative(m, x, log_scale); }) {
      return gen_.scaled_derivative(m, x, log_scale);
    } else {
      return gen_.derivative(m, x) * std::exp(log_scale);
    }
  }

  double clayton_pdf(double r) const {
    const double th = gen_.theta();
    double lp = 0.0;
    for (int j = 1; j < d_; ++j) lp += std::log1p(th * j);
    return std::exp(lp + (d_ - 1) * std::log(r) - (d_ + 1.0 / th) * std::log1p(th * r) - log_fact_dm1_);
  }

  double lower_mass(double r) const {
    auto f = [this](double t) { return pdf(t); };
    double m = detail::tanh_sinh_integrator().integrate(f, 0.0, r, 1e-13);
    return std::clamp(m, 0.0, 1.0);
  }

  G gen_;
  int d_;
  double atom_ = 0.0;
  double log_fact_dm1_ = 0.0;
};

// Precomputed survival and lower-tail values on a log-radius grid; turns
// repeated inversions (sampling) into a short bracketed refinement.
template <Generator G>
class InverseSurvivalTable {
 public:
  explicit InverseSurvivalTable(RadialDistribution<G> law, double step = 0.25) : law_(std::move(law)) {
    const double xe = law_.upper_end();
    const double top = std::isfinite(xe) ? std::log(xe) - 1e-9 : 0.0;
    std::vector<double> down_t, down_s, down_f;
    for (double t = top; t > -700.0; t -= step) {
      const double r = std::exp(t);
      const double f = law_.cdf(r);
      down_t.push_back(t);
      down_s.push_back(law_.survival(r));
      down_f.push_back(f);
      if (f < 1e-20) break;
    }
    t_.assign(down_t.rbegin(), down_t.rend());
    surv_.assign(down_s.rbegin(), down_s.rend());
    lower_.assign(down_f.rbegin(), down_f.rend());
    if (!std::isfinite(xe)) {
      for (double t = top + step; t < 700.0; t += step) {
        const double r = std::exp(t);
        const double sv = law_.survival(r);
        t_.push_back(t);
        surv_.push_back(sv);
        lower_.push_back(law_.cdf(r));
        if (sv < 1e-20) break;
      }
    }
  }

  [[nodiscard]] const RadialDistribution<G>& law() const { return law_; }

  // inf{r : P(R > r) <= p}, with q = 1 - p
  [[nodiscard]] double operator()(double p, double q) const {
    using B = typename RadialDistribution<G>::Bracket;
    const std::size_t n = t_.size();
    if (q < 1e-6) {
      auto it = std::upper_bound(lower_.begin(), lower_.end(), q);
      if (it != lower_.begin() && it != lower_.end()) {
        const auto i = static_cast<std::size_t>(it - lower_.begin());
        B b{t_[i - 1], t_[i]};
        return law_.inverse_survival(p, q, &b);
      }
    } else {
      // survival decreasing along the grid
      auto it = std::upper_bound(surv_.begin(), surv_.end(), p, std::greater<double>());
      if (it != surv_.begin() && it != surv_.end() && static_cast<std::size_t>(it - surv_.begin()) < n) {
        const auto i = static_cast<std::size_t>(it - surv_.begin());
        B b{t_[i - 1], t_[i]};
        return law_.inverse_survival(p, q, &b);
      }
    }
    return law_.inverse_survival(p, q);
  }

 private:
  RadialDistribution<G> law_;
  std::vector<double> t_, surv_, lower_;
};

// ---------------------------------------------------------------------------
// Williamson d-transform E[(1 - x/R)_+^{d-1}].

template <Generator G>
double williamson_transform(const RadialDistribution<G>& law, int d, double x) {
  if (x < 0.0) throw ValidationError("parameter_domain", "Williamson transform requires x >= 0");
  if (d < 2) throw ValidationError("parameter_domain", "Williamson transform requires d >= 2");
  if (x == 0.0) return 1.0;
  const double xe = law.upper_end();
  double cont = 0.0;
  auto& ts = detail::tanh_sinh_integrator();
  if (std::isfinite(xe)) {
    if (x < xe) {
      auto f = [&](double r) { return std::pow(1.0 - x / r, d - 1) * law.pdf(r); };
      cont = ts.integrate(f, x, xe, 1e-12);
    }
  } else {
    // r = x / (1 - t), t in (0, 1)
    auto f = [&](double t) {
      const double om = 1.0 - t;
      if (om <= 0.0) return 0.0;
      return std::pow(t, d - 1) * law.pdf(x / om) * x / (om * om);
    };
    cont = ts.integrate(f, 0.0, 1.0, 1e-12);
  }
  double at = 0.0;
  if (law.atom() > 0.0 && x < xe) at = law.atom() * std::pow(1.0 - x / xe, d - 1);
  return cont + at;
}

// Sample version: the mean of (1 - x/R_i)_+^{d-1} over the given draws.
inline double williamson_transform(std::span<const double> sample, int d, double x) {
  if (sample.empty()) throw ValidationError("dimension_mismatch", "empty radial sample");
  double s = 0.0;
  for (double r : sample) {
    if (r > x) s += std::pow(1.0 - x / r, d - 1);
  }
  return s / static_cast<double>(sample.size());
}

}  // namespace archimax
