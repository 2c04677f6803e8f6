#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace archimax {

// ---------------------------------------------------------------------------
// Unit-mean positive random vectors W with ell(x) = E[max_k x_k W_k].

struct WSampler {
  int dim = 0;
  std::string name;
  std::function<void(Engine&, std::span<double>)> draw;
};

// W_i = E_i^{-1/vartheta} / Gamma(1 - 1/vartheta), E_i iid unit exponential.
inline WSampler logistic_w_sampler(double vartheta, int dim);

// A uniformly random coordinate carries the whole mass dim, the rest are 0.
inline WSampler independence_w_sampler(int dim) {
  if (dim < 1) throw ValidationError("dimension_mismatch", "W-sampler dimension must be >= 1");
  return {dim, "independence", [dim](Engine& g, std::span<double> w) {
            std::fill(w.begin(), w.end(), 0.0);
            const auto k = static_cast<std::size_t>(uniform01(g) * dim);
            w[std::min<std::size_t>(k, dim - 1)] = static_cast<double>(dim);
          }};
}

inline WSampler comonotone_w_sampler(int dim) {
  if (dim < 1) throw ValidationError("dimension_mismatch", "W-sampler dimension must be >= 1");
  return {dim, "comonotone", [](Engine&, std::span<double> w) { std::fill(w.begin(), w.end(), 1.0); }};
}

inline WSampler logistic_w_sampler(double vartheta, int dim) {
  if (!(vartheta >= 1.0)) throw ValidationError("parameter_domain", "logistic vartheta must be >= 1");
  if (vartheta == 1.0) return independence_w_sampler(dim);
  const double inv = 1.0 / vartheta;
  const double norm = std::tgamma(1.0 - inv);
  return {dim, "logistic", [inv, norm](Engine& g, std::span<double> w) {
            for (double& v : w) v = std::exp(-inv * std::log(std_exponential(g))) / norm;
          }};
}

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

namespace detail {
inline constexpr std::size_t kMcBlock = 4096;

// Per-block mean and centred sum of squares, merged in block order
// (Chan et al. pairwise update) so the result is independent of threads.
struct BlockMoments {
  double n = 0, mean = 0, m2 = 0;
  void add(double x) {
    n += 1;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  void merge(const BlockMoments& o) {
    if (o.n == 0) return;
    const double tot = n + o.n;
    const double d = o.mean - mean;
    mean += d * o.n / tot;
    m2 += o.m2 + d * d * n * o.n / tot;
    n = tot;
  }
  [[nodiscard]] McEstimate result() const {
    McEstimate e;
    e.n = static_cast<std::size_t>(n);
    e.estimate = mean;
    e.std_error = n > 1 ? std::sqrt(m2 / (n - 1) / n) : 0.0;
    return e;
  }
};

// Runs `draw(engine) -> double` n times in deterministic blocks.
template <class F>
BlockMoments mc_moments(std::size_t n, std::uint64_t seed, F&& draw) {
  const std::size_t nblocks = (n + kMcBlock - 1) / kMcBlock;
  std::vector<BlockMoments> parts(nblocks);
  parallel_blocks(n, kMcBlock, [&](std::size_t b, std::size_t lo, std::size_t hi) {
    Engine g = substream(seed, b);
    BlockMoments m;
    for (std::size_t i = lo; i < hi; ++i) m.add(draw(g));
    parts[b] = m;
  });
  BlockMoments all;
  for (const auto& p : parts) all.merge(p);
  return all;
}
}  // namespace detail

// Sample mean of max_k x_k W_k.
inline McEstimate dnorm_mc_eval(const WSampler& sampler, std::span<const double> x, std::size_t n,
                                std::uint64_t seed) {
  if (static_cast<int>(x.size()) != sampler.dim)
    throw ValidationError("dimension_mismatch", "x length does not match W-sampler dimension");
  if (n < 1) throw ValidationError("parameter_domain", "sample count must be >= 1");
  for (double v : x)
    if (!(v >= 0.0)) throw ValidationError("parameter_domain", "stdf arguments must be nonnegative");
  if (std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; })) return {0.0, 0.0, n};
  const int d = sampler.dim;
  auto m = detail::mc_moments(n, seed, [&](Engine& g) {
    double w[64];
    std::vector<double> heap;
    std::span<double> ws;
    if (d <= 64) {
      ws = std::span<double>(w, d);
    } else {
      heap.resize(d);
      ws = heap;
    }
    sampler.draw(g, ws);
    double mx = 0.0;
    for (int k = 0; k < d; ++k) mx = std::max(mx, x[k] * ws[k]);
    return mx;
  });
  return m.result();
}

// ---------------------------------------------------------------------------
// Stable tail dependence functions.

class Stdf {
 public:
  enum class Kind { Logistic, Independence, AlphaTransformed, DNormMC };

  static Stdf logistic(double vartheta, int dim) {
    if (!(vartheta >= 1.0) || !std::isfinite(vartheta))
      throw ValidationError("parameter_domain", "logistic vartheta must be >= 1");
    check_dim(dim);
    Stdf s(Kind::Logistic, dim);
    s.vartheta_ = vartheta;
    return s;
  }

  static Stdf independence(int dim) {
    check_dim(dim);
    return Stdf(Kind::Independence, dim);
  }

  static Stdf dnorm_mc(WSampler sampler, std::size_t n, std::uint64_t seed) {
    check_dim(sampler.dim);
    if (n < 1) throw ValidationError("parameter_domain", "sample budget must be >= 1");
    Stdf s(Kind::DNormMC, sampler.dim);
    s.sampler_ = std::make_shared<const WSampler>(std::move(sampler));
    s.n_mc_ = n;
    s.seed_ = seed;
    return s;
  }

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] double vartheta() const { return vartheta_; }
  [[nodiscard]] double alpha() const { return alpha_; }
  [[nodiscard]] const Stdf& base() const { return *base_; }
  [[nodiscard]] const WSampler& sampler() const { return *sampler_; }
  [[nodiscard]] std::size_t mc_budget() const { return n_mc_; }
  [[nodiscard]] std::uint64_t mc_seed() const { return seed_; }

  [[nodiscard]] bool closed_form() const {
    switch (kind_) {
      case Kind::Logistic:
      case Kind::Independence: return true;
      case Kind::AlphaTransformed: return base_->closed_form();
      case Kind::DNormMC: return false;
    }
    return false;
  }

  // Logistic parameter of an equivalent closed form: independence is 1,
  // and the alpha-transform of logistic vartheta is logistic vartheta/alpha.
  [[nodiscard]] std::optional<double> logistic_parameter() const {
    switch (kind_) {
      case Kind::Logistic: return vartheta_;
      case Kind::Independence: return 1.0;
      case Kind::AlphaTransformed: {
        auto b = base_->logistic_parameter();
        if (!b) return std::nullopt;
        return *b / alpha_;
      }
      case Kind::DNormMC: return std::nullopt;
    }
    return std::nullopt;
  }

  [[nodiscard]] double operator()(std::span<const double> x) const { return eval(x); }
  [[nodiscard]] double operator()(std::initializer_list<double> x) const {
    return eval(std::span<const double>(x.begin(), x.size()));
  }

  [[nodiscard]] double eval(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != dim_)
      throw ValidationError("dimension_mismatch",
                            "stdf of dimension " + std::to_string(dim_) + " got " + std::to_string(x.size()));
    double mx = 0.0;
    for (double v : x) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("parameter_domain", "stdf arguments must be finite and >= 0");
      mx = std::max(mx, v);
    }
    if (mx == 0.0) return 0.0;
    switch (kind_) {
      case Kind::Independence: return std::accumulate(x.begin(), x.end(), 0.0);
      case Kind::Logistic: {
        double s = 0.0;
        for (double v : x) s += std::pow(v / mx, vartheta_);
        return mx * std::pow(s, 1.0 / vartheta_);
      }
      case Kind::AlphaTransformed: {
        // ell^alpha((x/m)^{1/alpha}) scaled by m, by homogeneity
        std::vector<double> y(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::pow(x[i] / mx, 1.0 / alpha_);
        return mx * std::pow(base_->eval(y), alpha_);
      }
      case Kind::DNormMC: return dnorm_mc_eval(*sampler_, x, n_mc_, seed_).estimate;
    }
    return 0.0;
  }

  // Stdf of the sub-vector with the given (0-based) coordinates.
  [[nodiscard]] Stdf margin(std::span<const int> idx) const {
    for (int i : idx)
      if (i < 0 || i >= dim_) throw ValidationError("dimension_mismatch", "margin index out of range");
    const int m = static_cast<int>(idx.size());
    switch (kind_) {
      case Kind::Logistic: return logistic(vartheta_, m);
      case Kind::Independence: return independence(m);
      case Kind::AlphaTransformed: {
        Stdf s(Kind::AlphaTransformed, m);
        s.alpha_ = alpha_;
        s.base_ = std::make_shared<const Stdf>(base_->margin(idx));
        return s;
      }
      case Kind::DNormMC: {
        auto full = sampler_;
        std::vector<int> keep(idx.begin(), idx.end());
        const int d = dim_;
        WSampler sub{m, full->name + "-margin", [full, keep, d](Engine& g, std::span<double> w) {
                       std::vector<double> tmp(d);
                       full->draw(g, tmp);
                       for (std::size_t i = 0; i < keep.size(); ++i) w[i] = tmp[keep[i]];
                     }};
        return dnorm_mc(std::move(sub), n_mc_, seed_);
      }
    }
    return *this;
  }

  friend Stdf alpha_transform(const Stdf& ell, double alpha);

 private:
  Stdf(Kind k, int dim) : kind_(k), dim_(dim) {}
  static void check_dim(int dim) {
    if (dim < 1) throw ValidationError("dimension_mismatch", "stdf dimension must be >= 1");
  }

  Kind kind_;
  int dim_;
  double vartheta_ = 1.0;
  double alpha_ = 1.0;
  std::shared_ptr<const Stdf> base_;
  std::shared_ptr<const WSampler> sampler_;
  std::size_t n_mc_ = 0;
  std::uint64_t seed_ = 0;
};

// ell_alpha(x) = ell^alpha(x^{1/alpha}); nested transforms compose by
// multiplying their indices.
inline Stdf alpha_transform(const Stdf& ell, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("parameter_domain", "alpha must lie in (0,1]");
  if (alpha == 1.0) return ell;
  Stdf s(Stdf::Kind::AlphaTransformed, ell.dim());
  if (ell.kind() == Stdf::Kind::AlphaTransformed) {
    s.alpha_ = ell.alpha() * alpha;
    s.base_ = ell.base_;
  } else {
    s.alpha_ = alpha;
    s.base_ = std::make_shared<const Stdf>(ell);
  }
  return s;
}

// Weights on the unit simplex: exact within 1e-12, silently renormalized
// within 1e-9, rejected beyond.
inline std::vector<double> checked_simplex(std::span<const double> w) {
  double s = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) throw ValidationError("off_simplex", "simplex weights must be nonnegative");
    s += v;
  }
  std::vector<double> r(w.begin(), w.end());
  const double dev = std::abs(s - 1.0);
  if (dev <= 1e-12) return r;
  if (dev <= 1e-9) {
    for (double& v : r) v /= s;
    return r;
  }
  throw ValidationError("off_simplex", "weights do not sum to one");
}

// A(w) = ell(w) on the unit simplex.
inline double pickands_eval(const Stdf& ell, std::span<const double> w) {
  if (static_cast<int>(w.size()) != ell.dim()) throw ValidationError("dimension_mismatch", "w has wrong length");
  return ell.eval(checked_simplex(w));
}

// lambda = 2 - ell(1,1), clamped to [0,1].
inline double upper_tail_coeff(const Stdf& ell) {
  if (ell.dim() != 2) throw ValidationError("dimension_mismatch", "upper tail coefficient needs a bivariate stdf");
  return std::clamp(2.0 - ell({1.0, 1.0}), 0.0, 1.0);
}

}  // namespace archimax
