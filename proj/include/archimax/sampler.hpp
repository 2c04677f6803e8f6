#pragma once

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "errors.hpp"
#include "generator.hpp"
#include "rng.hpp"
#include "stdf.hpp"

namespace archimax {

using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Model description

struct ClusterPartition {
  std::vector<std::vector<int>> blocks;  // 0-based variable indices

  [[nodiscard]] int size() const { return static_cast<int>(blocks.size()); }
  [[nodiscard]] int dim() const {
    int d = 0;
    for (const auto& b : blocks) d += static_cast<int>(b.size());
    return d;
  }

  void validate() const {
    if (blocks.empty()) throw ValidationError("incomplete_partition", "partition has no blocks", "/partition");
    std::set<int> seen;
    const int d = dim();
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      const std::string ptr = "/partition/" + std::to_string(k);
      if (blocks[k].size() < 2)
        throw ValidationError("singleton_cluster", "cluster " + std::to_string(k + 1) + " has fewer than 2 variables", ptr);
      for (int i : blocks[k]) {
        if (i < 0 || i >= d)
          throw ValidationError("index_out_of_range", "variable index " + std::to_string(i + 1) + " outside 1.." + std::to_string(d), ptr);
        if (!seen.insert(i).second)
          throw ValidationError("overlapping_blocks", "variable " + std::to_string(i + 1) + " appears in more than one block", ptr);
      }
    }
  }

  // cluster index of every variable
  [[nodiscard]] std::vector<int> cluster_of() const {
    std::vector<int> c(dim(), -1);
    for (int k = 0; k < size(); ++k)
      for (int i : blocks[k]) c[i] = k;
    return c;
  }

  // position of every variable inside its block
  [[nodiscard]] std::vector<int> position_of() const {
    std::vector<int> p(dim(), -1);
    for (const auto& b : blocks)
      for (std::size_t j = 0; j < b.size(); ++j) p[b[j]] = static_cast<int>(j);
    return p;
  }
};

struct RadialCopulaSpec {
  enum class Kind { Independence, Gaussian, Gumbel };
  Kind kind = Kind::Independence;
  Matrix corr;            // Gaussian
  double vartheta = 1.0;  // Gumbel

  static RadialCopulaSpec independence() { return {}; }
  static RadialCopulaSpec gaussian(Matrix corr) {
    RadialCopulaSpec s;
    s.kind = Kind::Gaussian;
    s.corr = std::move(corr);
    return s;
  }
  static RadialCopulaSpec gaussian_equicorrelated(int K, double rho) {
    Matrix c = Matrix::Constant(K, K, rho);
    c.diagonal().setOnes();
    return gaussian(std::move(c));
  }
  static RadialCopulaSpec gumbel(double vartheta) {
    RadialCopulaSpec s;
    s.kind = Kind::Gumbel;
    s.vartheta = vartheta;
    return s;
  }

  void validate(int K) const {
    if (kind == Kind::Gaussian) {
      if (corr.rows() != K || corr.cols() != K)
        throw ValidationError("dimension_mismatch", "radial correlation must be K x K", "/radial");
      for (int i = 0; i < K; ++i) {
        if (std::abs(corr(i, i) - 1.0) > 1e-12)
          throw ValidationError("parameter_domain", "radial correlation needs a unit diagonal", "/radial");
        for (int j = 0; j < K; ++j)
          if (std::abs(corr(i, j) - corr(j, i)) > 1e-12 || std::abs(corr(i, j)) > 1.0)
            throw ValidationError("parameter_domain", "radial correlation must be symmetric with entries in [-1,1]", "/radial");
      }
      Eigen::LLT<Matrix> llt(corr);
      if (llt.info() != Eigen::Success)
        throw ValidationError("not_positive_definite", "radial correlation is not positive definite", "/radial");
    } else if (kind == Kind::Gumbel) {
      if (!(vartheta >= 1.0) || !std::isfinite(vartheta))
        throw ValidationError("parameter_domain", "Gumbel radial parameter must be >= 1", "/radial/vartheta");
    }
  }
};

struct ClusteredModelSpec {
  ClusterPartition partition;
  std::vector<ArchimedeanGenerator> generators;
  std::vector<Stdf> stdfs;
  RadialCopulaSpec radial;

  [[nodiscard]] int K() const { return partition.size(); }
  [[nodiscard]] int dim() const { return partition.dim(); }
  [[nodiscard]] int cluster_dim(int k) const { return static_cast<int>(partition.blocks[k].size()); }

  void validate() const {
    partition.validate();
    const auto K = static_cast<std::size_t>(partition.size());
    if (generators.size() != K)
      throw ValidationError("dimension_mismatch", "need one generator per cluster", "/clusters");
    if (stdfs.size() != K) throw ValidationError("dimension_mismatch", "need one stdf per cluster", "/clusters");
    for (std::size_t k = 0; k < K; ++k)
      if (stdfs[k].dim() != static_cast<int>(partition.blocks[k].size()))
        throw ValidationError("dimension_mismatch",
                              "stdf dimension of cluster " + std::to_string(k + 1) + " does not match its block size",
                              "/clusters/" + std::to_string(k) + "/stdf/dim");
    radial.validate(static_cast<int>(K));
  }
};

// ---------------------------------------------------------------------------
// Copula samplers. Each returns the pair (V, 1 - V) per coordinate so that
// callers can invert survival functions without cancellation.

inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

class GaussianCopulaSampler {
 public:
  explicit GaussianCopulaSampler(const Matrix& corr) {
    Eigen::LLT<Matrix> llt(corr);
    if (llt.info() != Eigen::Success) throw ValidationError("not_positive_definite", "correlation matrix is not positive definite");
    chol_ = llt.matrixL();
  }
  [[nodiscard]] int dim() const { return static_cast<int>(chol_.rows()); }
  void operator()(Engine& g, std::span<double> v, std::span<double> one_minus_v) const {
    const int K = dim();
    Eigen::VectorXd z(K);
    for (int k = 0; k < K; ++k) z[k] = std_normal(g);
    const Eigen::VectorXd y = chol_ * z;
    for (int k = 0; k < K; ++k) {
      v[k] = std_normal_cdf(y[k]);
      one_minus_v[k] = std_normal_cdf(-y[k]);
    }
  }

 private:
  Matrix chol_;
};

// Positive stable variable with Laplace transform exp(-s^alpha), 0 < alpha < 1
// (Chambers-Mallows-Stuck / Kanter representation).
inline double positive_stable(double alpha, Engine& g) {
  if (alpha >= 1.0) return 1.0;
  const double u = std::numbers::pi * uniform01(g);
  const double e = std_exponential(g);
  const double a = std::sin(alpha * u) / std::pow(std::sin(u), 1.0 / alpha);
  return a * std::pow(std::sin((1.0 - alpha) * u) / e, (1.0 - alpha) / alpha);
}

// Gumbel copula by Marshall-Olkin: V_k = exp(-(E_k / M)^{1/vartheta}).
inline void sample_gumbel_copula(double vartheta, Engine& g, std::span<double> v, std::span<double> one_minus_v) {
  if (!(vartheta >= 1.0)) throw ValidationError("parameter_domain", "Gumbel parameter must be >= 1");
  const double alpha = 1.0 / vartheta;
  const double m = positive_stable(alpha, g);
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double t = std::pow(std_exponential(g) / m, alpha);
    v[k] = std::exp(-t);
    one_minus_v[k] = -std::expm1(-t);
  }
}

inline std::vector<double> sample_gaussian_copula(const Matrix& corr, Engine& g) {
  GaussianCopulaSampler s(corr);
  std::vector<double> v(s.dim()), w(s.dim());
  s(g, v, w);
  return v;
}

inline std::vector<double> sample_gumbel_copula(double vartheta, int K, Engine& g) {
  std::vector<double> v(K), w(K);
  sample_gumbel_copula(vartheta, g, v, w);
  return v;
}

// ---------------------------------------------------------------------------
// Vectors S with P(S > s) = (1 - ell(s))_+^{d-1}.

class SimplexSampler {
 public:
  explicit SimplexSampler(const Stdf& ell) : d_(ell.dim()) {
    auto vt = ell.logistic_parameter();
    if (!vt) throw CapabilityError("simplex sampling needs a closed-form logistic or independence stdf");
    if (d_ < 2) throw ValidationError("dimension_mismatch", "simplex vectors need d >= 2");
    vartheta_ = *vt;
    if (vartheta_ > 1.0) radial_.emplace(RadialDistribution<SimplexRadialGenerator>(SimplexRadialGenerator(vartheta_, d_), d_));
  }

  [[nodiscard]] int dim() const { return d_; }

  void operator()(Engine& g, std::span<double> s) const {
    // uniform direction on the simplex
    double tot = 0.0;
    for (int i = 0; i < d_; ++i) tot += (s[i] = std_exponential(g));
    if (!radial_) {
      for (int i = 0; i < d_; ++i) s[i] /= tot;
      return;
    }
    const double u = uniform01(g);
    const double r = (*radial_)(u, 1.0 - u);
    const double inv = 1.0 / vartheta_;
    for (int i = 0; i < d_; ++i) s[i] = std::pow(r * s[i] / tot, inv);
  }

  // S = (radius * dir)^{1/vartheta} with dir uniform on the simplex; radius is 1 without a radial part.
  void draw_split(Engine& g, std::span<double> dir, double& radius) const {
    double tot = 0.0;
    for (int i = 0; i < d_; ++i) tot += (dir[i] = std_exponential(g));
    for (int i = 0; i < d_; ++i) dir[i] /= tot;
    radius = 1.0;
    if (radial_) {
      const double u = uniform01(g);
      radius = (*radial_)(u, 1.0 - u);
    }
  }

  [[nodiscard]] double vartheta() const { return vartheta_; }

 private:
  int d_;
  double vartheta_ = 1.0;
  std::optional<InverseSurvivalTable<SimplexRadialGenerator>> radial_;
};

inline std::vector<double> sample_simplex_vector(const Stdf& ell, int d, Engine& g) {
  if (ell.dim() != d) throw ValidationError("dimension_mismatch", "stdf dimension differs from d");
  SimplexSampler s(ell);
  std::vector<double> out(d);
  s(g, out);
  return out;
}

// ---------------------------------------------------------------------------
// Radial vectors: V ~ survival radial copula, R_k = F_{R_k}^{-1}(1 - V_k).

class RadialSampler {
 public:
  explicit RadialSampler(const ClusteredModelSpec& model) : spec_(model.radial) {
    for (int k = 0; k < model.K(); ++k)
      tables_.emplace_back(RadialDistribution<ArchimedeanGenerator>(model.generators[k], model.cluster_dim(k)));
    if (spec_.kind == RadialCopulaSpec::Kind::Gaussian) gauss_.emplace(spec_.corr);
  }

  [[nodiscard]] int K() const { return static_cast<int>(tables_.size()); }
  [[nodiscard]] const RadialDistribution<ArchimedeanGenerator>& law(int k) const { return tables_[k].law(); }

  // Copula-scale draw (V, 1 - V).
  void draw_uniform(Engine& g, std::span<double> v, std::span<double> w) const {
    switch (spec_.kind) {
      case RadialCopulaSpec::Kind::Independence:
        for (std::size_t k = 0; k < v.size(); ++k) {
          v[k] = uniform01(g);
          w[k] = 1.0 - v[k];
        }
        break;
      case RadialCopulaSpec::Kind::Gaussian: (*gauss_)(g, v, w); break;
      case RadialCopulaSpec::Kind::Gumbel: sample_gumbel_copula(spec_.vartheta, g, v, w); break;
    }
  }

  void operator()(Engine& g, std::span<double> r) const {
    const int K = this->K();
    double vb[32], wb[32];
    std::vector<double> vh, wh;
    std::span<double> v, w;
    if (K <= 32) {
      v = std::span<double>(vb, K);
      w = std::span<double>(wb, K);
    } else {
      vh.resize(K);
      wh.resize(K);
      v = vh;
      w = wh;
    }
    draw_uniform(g, v, w);
    for (int k = 0; k < K; ++k) r[k] = tables_[k](v[k], w[k]);
  }

 private:
  RadialCopulaSpec spec_;
  std::vector<InverseSurvivalTable<ArchimedeanGenerator>> tables_;
  std::optional<GaussianCopulaSampler> gauss_;
};

inline std::vector<double> sample_radial_vector(const ClusteredModelSpec& model, Engine& g) {
  RadialSampler s(model);
  std::vector<double> r(model.K());
  s(g, r);
  return r;
}

// ---------------------------------------------------------------------------
// Clustered Archimax rows: U_{ki} = psi_k(R_k S_{ki}).

inline constexpr std::size_t kRowBlock = 256;

inline double clamp_open_unit(double u) {
  return std::clamp(u, DBL_MIN, 1.0 - DBL_EPSILON / 2);
}

class ClusteredSampler {
 public:
  explicit ClusteredSampler(ClusteredModelSpec model) : model_(std::move(model)), radial_((model_.validate(), model_)) {
    for (const auto& ell : model_.stdfs) simplex_.emplace_back(ell);
  }

  [[nodiscard]] const ClusteredModelSpec& model() const { return model_; }
  [[nodiscard]] const RadialSampler& radial() const { return radial_; }

  // One row in original variable order.
  void draw_row(Engine& g, std::span<double> u) const {
    const int K = model_.K();
    std::vector<double> r(K), s;
    radial_(g, r);
    for (int k = 0; k < K; ++k) {
      const auto& block = model_.partition.blocks[k];
      s.resize(block.size());
      simplex_[k](g, s);
      const auto& psi = model_.generators[k];
      for (std::size_t j = 0; j < block.size(); ++j) u[block[j]] = clamp_open_unit(psi.psi(r[k] * s[j]));
    }
  }

  // n rows; rows are grouped in fixed blocks with their own substreams, so
  // the first m rows are the same for every n >= m and every thread count.
  [[nodiscard]] Matrix sample(std::size_t n, std::uint64_t seed) const {
    const int d = model_.dim();
    Matrix out(n, d);
    parallel_blocks(n, kRowBlock, [&](std::size_t b, std::size_t lo, std::size_t hi) {
      Engine g = substream(seed, b);
      std::vector<double> row(d);
      for (std::size_t i = lo; i < hi; ++i) {
        draw_row(g, row);
        for (int j = 0; j < d; ++j) out(static_cast<Eigen::Index>(i), j) = row[j];
      }
    });
    return out;
  }

 private:
  ClusteredModelSpec model_;
  RadialSampler radial_;
  std::vector<SimplexSampler> simplex_;
};

inline Matrix sample_clustered(const ClusteredModelSpec& model, std::size_t n, std::uint64_t seed) {
  return ClusteredSampler(model).sample(n, seed);
}

}  // namespace archimax
