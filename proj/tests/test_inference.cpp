#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "archimax/inference.hpp"
#include "support/models.hpp"
#include "support/stats.hpp"

using namespace archimax;
using namespace testsupport;
using Catch::Approx;

namespace {

// E[C] and E[C^2] as averages over ordered pairs and triples of distinct indices
std::pair<double, double> moments_brute(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double s1 = 0, s2 = 0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k) {
      if (k == j) continue;
      const bool a = x[k] < x[j] && y[k] < y[j];
      s1 += a;
      for (std::size_t l = 0; l < n; ++l) {
        if (l == j || l == k) continue;
        s2 += a && x[l] < x[j] && y[l] < y[j];
      }
    }
  const double nn = static_cast<double>(n);
  return {s1 / (nn * (nn - 1)), s2 / (nn * (nn - 1) * (nn - 2))};
}

// phi and phi' written out independently of the library
double phi_ref(Family f, double th, double t) {
  switch (f) {
    case Family::Clayton: return (std::pow(t, -th) - 1.0) / th;
    case Family::Joe: return -std::log1p(-std::pow(1.0 - t, th));
    case Family::Frank: {
      // -log(1 + (e^{-theta} - e^{-theta t}) / (1 - e^{-theta}))
      const double num = std::exp(-th) - std::exp(-th * t);
      return -std::log1p(num / (1.0 - std::exp(-th)));
    }
  }
  return 0;
}
double dphi_ref(Family f, double th, double t) {
  switch (f) {
    case Family::Clayton: return -std::pow(t, -th - 1.0);
    case Family::Joe: return -th * std::pow(1.0 - t, th - 1.0) / -std::expm1(th * std::log1p(-t));
    case Family::Frank: return th * std::exp(-th * t) / (std::exp(-th * t) - 1.0);
  }
  return 0;
}

Matrix cols(const Matrix& m, std::vector<int> c) { return select_columns(m, c); }

}  // namespace

TEST_CASE("pseudo-observations", "[inference]") {
  Matrix d(3, 2);
  d << 3.2, 1, 1.1, 1, 7.7, 2;
  auto u = pseudo_observations(d);
  CHECK(u(0, 0) == 0.5);
  CHECK(u(1, 0) == 0.25);
  CHECK(u(2, 0) == 0.75);
  CHECK(u(0, 1) == 0.375);
  CHECK(u(1, 1) == 0.375);
  CHECK(u(2, 1) == 0.75);
  std::mt19937_64 g(3);
  std::normal_distribution<double> N;
  Matrix x(200, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = N(g);
  Matrix fx = x.array().exp().matrix();
  fx.col(1) = x.col(1).array().pow(3).matrix();
  CHECK((pseudo_observations(x).array() == pseudo_observations(fx).array()).all());
  Matrix c = Matrix::Ones(5, 1);
  CHECK_THROWS_AS(pseudo_observations(c), ValidationError);
}

TEST_CASE("Kendall moments and leave-one-out updates", "[inference]") {
  std::mt19937_64 g(9);
  std::uniform_int_distribution<int> coarse(0, 6);
  std::normal_distribution<double> N;
  for (int rep = 0; rep < 6; ++rep) {
    const std::size_t n = 25 + rep;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      // half of the repetitions carry ties
      x[i] = rep % 2 ? coarse(g) : N(g);
      y[i] = rep % 2 ? coarse(g) + 0.3 * x[i] : x[i] + N(g);
    }
    auto [b1, b2] = moments_brute(x, y);
    auto m = kendall_moments(x, y);
    CHECK(m.m1 == Approx(b1).epsilon(1e-14));
    CHECK(m.m2 == Approx(b2).epsilon(1e-14));
    auto loo = kendall_moments_loo(x, y);
    for (std::size_t v = 0; v < n; ++v) {
      auto xs = x, ys = y;
      xs.erase(xs.begin() + v);
      ys.erase(ys.begin() + v);
      auto direct = kendall_moments(xs, ys);
      CHECK(loo[v].n == n - 1);
      CHECK(loo[v].m1 == direct.m1);
      CHECK(loo[v].m2 == direct.m2);
    }
  }
}

TEST_CASE("Kendall integrals against an independent quadrature", "[inference]") {
  for (auto [f, th] : {std::pair{Family::Clayton, 1.5}, {Family::Joe, 1.5}, {Family::Joe, 4.0}, {Family::Frank, 3.0},
                       {Family::Frank, 20.0}, {Family::Clayton, 0.2}}) {
    auto k = [&](double t) { return phi_ref(f, th, t) / dphi_ref(f, th, t); };
    // adaptive Gauss-Kronrod on pieces refined toward t = 1
    double i1 = 0, i2 = 0;
    const double cuts[] = {0.0, 0.5, 0.9, 0.99, 0.999, 1.0};
    for (int c = 0; c < 5; ++c) {
      i1 += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(k, cuts[c], cuts[c + 1], 10, 1e-12);
      i2 += boost::math::quadrature::gauss_kronrod<double, 61>::integrate([&](double t) { return t * k(t); }, cuts[c],
                                                                           cuts[c + 1], 10, 1e-12);
    }
    auto I = kendall_integrals(ArchimedeanGenerator(f, th));
    CAPTURE(to_string(f), th);
    CHECK(I.i1 == Approx(i1).epsilon(1e-8));
    CHECK(I.i2 == Approx(i2).epsilon(1e-8));
  }
  // independence generator e^{-x}: I1 = int t log t = -1/4
  CHECK(kendall_integrals(ArchimedeanGenerator(Family::Joe, 1.0)).i1 == Approx(-0.25).epsilon(1e-12));
  CHECK(kendall_moment_ratio(Family::Joe, 1.0) == Approx(4.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("bivariate Archimax moments: closed form and quadrature routes", "[inference]") {
  struct C {
    ArchimedeanGenerator g;
    double vt;
  };
  for (const auto& c : {C{ArchimedeanGenerator(Family::Clayton, 1.5), 1.25}, C{ArchimedeanGenerator(Family::Joe, 2.0), 1.5},
                        C{ArchimedeanGenerator(Family::Frank, 3.0), 2.0}, C{ArchimedeanGenerator(Family::Clayton, 2.0), 1.0}}) {
    const double closed = archimax_kendall_tau(c.g, logistic_ev_tau(c.vt));
    const double quad = archimax_kendall_tau_quadrature(c.g, Stdf::logistic(c.vt, 2), 400);
    CAPTURE(to_string(c.g.family()), c.vt);
    CHECK(std::abs(closed - quad) < 2e-3);
  }
  // Clayton copula: tau = theta/(theta+2)
  CHECK(archimax_kendall_tau(ArchimedeanGenerator(Family::Clayton, 2.0), 0.0) == Approx(0.5).epsilon(1e-14));
  // independence limit
  CHECK(std::abs(archimax_kendall_tau(ArchimedeanGenerator(Family::Clayton, 1e-9), 0.0)) < 1e-8);
  CHECK(std::abs(archimax_kendall_tau_quadrature(ArchimedeanGenerator(Family::Joe, 1.0), Stdf::logistic(1.0, 2))) < 1e-6);
  CHECK(std::abs(archimax_spearman_rho(ArchimedeanGenerator(Family::Joe, 1.0), Stdf::logistic(1.0, 2))) < 1e-6);
  // Gumbel copula via Joe theta=1 and logistic: tau = 1 - 1/vartheta
  CHECK(archimax_kendall_tau_quadrature(ArchimedeanGenerator(Family::Joe, 1.0), Stdf::logistic(2.0, 2), 400) ==
        Approx(0.5).margin(2e-3));
}

TEST_CASE("pairwise distortion fit recovers simulation parameters", "[inference][simulation]") {
  auto u = sample_clustered(single_cluster_model(ArchimedeanGenerator(Family::Clayton, 1.5), Stdf::logistic(1.25, 3)),
                            10000, 2024);
  for (auto [i, j] : {std::pair{0, 1}, {0, 2}, {1, 2}}) {
    auto f = pairwise_theta_fit(column_of(u, i), column_of(u, j), Family::Clayton);
    CAPTURE(i, j, f.theta, f.vartheta);
    CHECK(std::abs(f.theta - 1.5) < 0.15);
    CHECK(std::abs(f.vartheta - 1.25) < 0.1);
  }
  auto uj = sample_clustered(single_cluster_model(ArchimedeanGenerator(Family::Joe, 2.0), Stdf::logistic(1.5, 2)), 10000, 7);
  auto fj = pairwise_theta_fit(column_of(uj, 0), column_of(uj, 1), Family::Joe);
  CHECK(std::abs(fj.theta - 2.0) < 0.3);
  CHECK(std::abs(fj.vartheta - 1.5) < 0.15);
  auto uf = sample_clustered(single_cluster_model(ArchimedeanGenerator(Family::Frank, 3.0), Stdf::logistic(1.5, 2)), 10000, 8);
  auto ff = pairwise_theta_fit(column_of(uf, 0), column_of(uf, 1), Family::Frank);
  // the moment ratio is flat in the Frank parameter (4/9 at 0, 1/2 at infinity)
  CHECK(std::abs(ff.theta - 3.0) < 1.0);
  CHECK(std::abs(ff.vartheta - 1.5) < 0.15);

  // independent columns: both parameters near their independence limits
  Engine g = substream(4, 4);
  std::vector<double> a(10000), b(10000);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = uniform01(g), b[i] = uniform01(g);
  auto fi = pairwise_theta_fit(a, b, Family::Clayton);
  CHECK(fi.theta < 0.2);
  CHECK(fi.vartheta < 1.05);
  // exact moments of the independence copula land on the lower boundary
  auto edge = fit_from_moments({0.25, 1.0 / 9.0, 100}, Family::Clayton);
  CHECK(edge.theta == theta_box(Family::Clayton).lo);
  CHECK(edge.theta_at_bound);
  CHECK(edge.vartheta == Approx(1.0).margin(1e-3));
  CHECK_THROWS_AS(pairwise_theta_fit(std::vector<double>(10, 0.5), std::vector<double>(10, 0.5), Family::Joe),
                  ValidationError);
}

TEST_CASE("moment equations are solved exactly", "[inference]") {
  // feed model moments back in
  for (auto [f, th] : {std::pair{Family::Clayton, 0.7}, {Family::Joe, 1.8}, {Family::Frank, 5.0}}) {
    for (double vt : {1.0, 1.4, 3.0}) {
      const auto I = kendall_integrals(ArchimedeanGenerator(f, th));
      const double te = logistic_ev_tau(vt);
      KendallMoments m{0.5 + (1 - te) * I.i1, 1.0 / 3.0 + 2 * (1 - te) * I.i2, 1000};
      auto fit = fit_from_moments(m, f);
      CAPTURE(to_string(f), th, vt);
      CHECK(fit.theta == Approx(th).epsilon(1e-8));
      CHECK(fit.vartheta == Approx(vt).epsilon(1e-8));
    }
  }
}

TEST_CASE("cluster averages and homogeneity statistic", "[inference]") {
  ClusterPartition p{{{0, 1, 2}, {3, 4}}};
  Matrix th = Matrix::Constant(5, 5, std::nan(""));
  auto set = [&](int i, int j, double v) { th(i, j) = th(j, i) = v; };
  set(0, 1, 1.0);
  set(0, 2, 1.2);
  set(1, 2, 1.1);
  set(3, 4, 2.0);
  auto bar = cluster_theta_bar(th, p);
  CHECK(bar[0] == Approx(1.1).epsilon(1e-15));
  CHECK(bar[1] == 2.0);
  auto T = homogeneity_statistic(th, bar, p);
  REQUIRE(T.size() == 4);
  CHECK(T(0) == Approx(-0.1).epsilon(1e-13));
  CHECK(T(1) == Approx(0.1).epsilon(1e-13));
  CHECK(std::abs(T(2)) < 1e-15);
  CHECK(T(3) == 0.0);
  auto missing = th;
  missing(1, 2) = missing(2, 1) = std::nan("");
  CHECK_THROWS_AS(cluster_theta_bar(missing, p), ValidationError);

  std::mt19937_64 g(1);
  std::uniform_real_distribution<double> U(1.0, 5.0);
  ClusterPartition q{{{0, 3, 5, 6}, {1, 2}, {4, 7, 8}}};
  for (int rep = 0; rep < 100; ++rep) {
    Matrix m = Matrix::Constant(9, 9, std::nan(""));
    for (const auto& ix : homogeneity_index(q)) m(ix.i, ix.j) = m(ix.j, ix.i) = U(g);
    auto b = cluster_theta_bar(m, q);
    auto t = homogeneity_statistic(m, b, q);
    auto idx = homogeneity_index(q);
    std::vector<double> s(3, 0.0);
    for (std::size_t a = 0; a < idx.size(); ++a) s[idx[a].k] += t(static_cast<Eigen::Index>(a));
    for (double v : s) CHECK(std::abs(v) < 1e-14);
  }
}

TEST_CASE("jackknife covariance", "[inference]") {
  Matrix same = Matrix::Ones(50, 3) * 0.37;
  CHECK((jackknife_covariance(same).array() == 0.0).all());
  // univariate mean: Sigma/n is the classical jackknife variance
  std::mt19937_64 g(2);
  std::normal_distribution<double> N;
  const int n = 40;
  std::vector<double> x(n);
  for (auto& v : x) v = N(g);
  const double total = std::accumulate(x.begin(), x.end(), 0.0);
  Matrix loo(n, 1);
  for (int v = 0; v < n; ++v) loo(v, 0) = (total - x[v]) / (n - 1);
  double mean = 0;
  for (int v = 0; v < n; ++v) mean += loo(v, 0);
  mean /= n;
  double classical = 0;
  for (int v = 0; v < n; ++v) classical += (loo(v, 0) - mean) * (loo(v, 0) - mean);
  classical *= (n - 1.0) / n;
  CHECK(jackknife_covariance(loo)(0, 0) / n == Approx(classical).epsilon(1e-12));
  // and the sample variance of the mean
  double sv = 0;
  for (double v : x) sv += (v - total / n) * (v - total / n);
  CHECK(jackknife_covariance(loo)(0, 0) / n == Approx(sv / (n - 1) / n).epsilon(1e-12));
}

TEST_CASE("jackknife on simulated data", "[inference][simulation]") {
  auto m = three_cluster_model('A');
  auto u = sample_clustered(m, 300, 11);
  std::vector<Family> fam{Family::Clayton, Family::Joe, Family::Joe};
  auto jk = jackknife_sigma(u, m.partition, fam);
  REQUIRE(jk.sigma.rows() == 9);
  CHECK((jk.sigma - jk.sigma.transpose()).cwiseAbs().maxCoeff() == 0.0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(jk.sigma);
  CHECK(es.eigenvalues().minCoeff() > -1e-8 * es.eigenvalues().maxCoeff());
  // leave-one-out rows agree with refits on the reduced sample
  for (int v : {0, 17, 299}) {
    Matrix red(u.rows() - 1, u.cols());
    for (Eigen::Index i = 0, r = 0; i < u.rows(); ++i)
      if (i != v) red.row(r++) = u.row(i);
    auto est = fit_pairwise(red, m.partition, fam);
    auto bar = cluster_theta_bar(est.theta, m.partition);
    auto t = homogeneity_statistic(est.theta, bar, m.partition);
    for (Eigen::Index a = 0; a < t.size(); ++a) CHECK(jk.loo(v, a) == Approx(t(a)).margin(1e-9));
  }
  set_thread_cap(3);
  auto jk3 = jackknife_sigma(u, m.partition, fam);
  set_thread_cap(0);
  CHECK((jk3.sigma.array() == jk.sigma.array()).all());
}

TEST_CASE("homogeneity test p-values", "[inference]") {
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
  Matrix I = Matrix::Identity(4, 4);
  auto r0 = homogeneity_test(zero, I, 100, 2000, 1);
  CHECK(r0.p_sup == 1.0);
  CHECK(r0.p_euclid == 1.0);
  Eigen::VectorXd big = Eigen::VectorXd::Zero(4);
  big(2) = 5.0;
  auto r1 = homogeneity_test(big, I, 100, 20000, 1);
  CHECK(r1.stat_sup == Approx(50.0));
  CHECK(r1.p_sup == 0.0);
  CHECK(r1.p_euclid == 0.0);
  auto raw = homogeneity_test(big, I, 100, 20000, 1, TestScaling::Raw);
  CHECK(raw.stat_sup == 5.0);
  CHECK(raw.p_sup < 1e-3);
  // Euclidean p-value against the chi-square(4) tail at 1.5^2
  Eigen::VectorXd mid = Eigen::VectorXd::Constant(4, 0.75);
  auto r2 = homogeneity_test(mid, I, 1, 200000, 3);
  const double x = 2.25 / 2.0;
  const double chi2_tail = std::exp(-x) * (1.0 + x);
  CHECK(std::abs(r2.p_euclid - chi2_tail) < 4 * std::sqrt(chi2_tail * (1 - chi2_tail) / 200000));
  // a negative eigenvalue is clipped
  Matrix ind = Matrix::Identity(4, 4);
  ind(3, 3) = -1e-10;
  CHECK(homogeneity_test(mid, ind, 1, 1000, 3).clipped_eigenvalues == 1);
  set_thread_cap(4);
  auto r3 = homogeneity_test(mid, I, 1, 200000, 3);
  set_thread_cap(0);
  CHECK(r3.p_euclid == r2.p_euclid);
  CHECK(r3.p_sup == r2.p_sup);
}

TEST_CASE("CFG Pickands estimator", "[inference]") {
  std::mt19937_64 g(5);
  std::normal_distribution<double> N;
  Matrix x(500, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = N(g);
  auto u = pseudo_observations(x);
  for (auto [f, th] : {std::pair{Family::Clayton, 1.5}, {Family::Joe, 2.0}, {Family::Frank, 4.0}})
    for (int i = 0; i < 3; ++i) {
      std::vector<double> e(3, 0.0);
      e[i] = 1.0;
      CHECK(cfg_pickands(u, th, f, e).value == 1.0);
      CHECK(cfg_pickands(u, th, f, e).raw == 1.0);
    }
  Matrix co(400, 2);
  for (Eigen::Index i = 0; i < 400; ++i) co(i, 0) = co(i, 1) = N(g);
  auto uc = pseudo_observations(co);
  const std::vector<double> half{0.5, 0.5};
  CHECK(cfg_pickands(uc, 2.0, Family::Joe, half).value == Approx(0.5).epsilon(1e-14));
  ClusterPartition p{{{0, 1}}};
  std::vector<double> bar{1.3};
  std::vector<Family> cl{Family::Clayton};
  CHECK(cfg_lambda(uc, p, bar, cl, 0, 1).lambda == Approx(1.0).epsilon(1e-13));
  CHECK_THROWS_AS(cfg_pickands(u, 1.5, Family::Clayton, std::vector<double>{0.5, 0.6, 0.0}), ValidationError);

  auto s = sample_clustered(single_cluster_model(ArchimedeanGenerator(Family::Clayton, 1.5), Stdf::logistic(1.25, 3)),
                            10000, 99);
  auto ps = pseudo_observations(s);
  const std::vector<double> third{1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(std::abs(cfg_pickands(ps, 1.5, Family::Clayton, third).value - std::pow(3.0, 0.8) / 3.0) < 0.02);
  // Pickands bounds hold after clamping
  Engine e = substream(6, 0);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<double> w(3);
    double t = 0;
    for (auto& v : w) t += (v = std_exponential(e));
    for (auto& v : w) v /= t;
    w[2] = 1.0 - w[0] - w[1];
    auto a = cfg_pickands(ps, 1.5, Family::Clayton, w);
    CHECK(a.value <= 1.0);
    CHECK(a.value >= std::max({w[0], w[1], w[2]}));
  }
}

TEST_CASE("CFG tail coefficients on simulated clusters", "[inference][simulation]") {
  auto m = three_cluster_model('A');
  auto u = pseudo_observations(sample_clustered(m, 10000, 31));
  std::vector<double> bar{1.5, 1.5, 2.0};
  std::vector<Family> fam{Family::Clayton, Family::Joe, Family::Joe};
  CHECK(std::abs(cfg_lambda(u, m.partition, bar, fam, 0, 1).lambda - (2 - std::pow(2.0, 0.8))) < 0.05);
  CHECK(std::abs(cfg_lambda(u, m.partition, bar, fam, 3, 4).lambda - (2 - std::pow(2.0, 1.0 / 3))) < 0.05);
  CHECK(std::abs(cfg_lambda(u, m.partition, bar, fam, 6, 8).lambda - (2 - std::pow(2.0, 1.0 / 3))) < 0.05);
  CHECK_THROWS_AS(cfg_lambda(u, m.partition, bar, fam, 0, 4), ValidationError);
  auto ind = pseudo_observations(
      sample_clustered(single_cluster_model(ArchimedeanGenerator(Family::Clayton, 1.5), Stdf::independence(2)), 10000, 5));
  ClusterPartition p{{{0, 1}}};
  std::vector<double> b1{1.5};
  std::vector<Family> f1{Family::Clayton};
  CHECK(cfg_lambda(ind, p, b1, f1, 0, 1).lambda < 0.05);
  // cluster averages on the same sample
  auto est = fit_pairwise(u, m.partition, fam);
  auto tb = cluster_theta_bar(est.theta, m.partition);
  CHECK(std::abs(tb[0] - 1.5) < 0.1);
}

TEST_CASE("rank invariance of the estimators", "[inference][property]") {
  auto m = three_cluster_model('B');
  auto u = sample_clustered(m, 400, 3);
  Matrix y = u;
  for (Eigen::Index j = 0; j < y.cols(); ++j)
    for (Eigen::Index i = 0; i < y.rows(); ++i) y(i, j) = j % 2 ? std::log(u(i, j) / (1 - u(i, j))) : std::pow(u(i, j), 3) * 7;
  std::vector<Family> fam{Family::Clayton, Family::Joe, Family::Joe};
  auto a = fit_pairwise(u, m.partition, fam), b = fit_pairwise(y, m.partition, fam);
  CHECK((a.theta.array().isNaN() == b.theta.array().isNaN()).all());
  for (const auto& ix : a.index) {
    CHECK(a.theta(ix.i, ix.j) == b.theta(ix.i, ix.j));
    CHECK(a.vartheta(ix.i, ix.j) == b.vartheta(ix.i, ix.j));
  }
  const std::vector<double> w{0.2, 0.3, 0.5};
  CHECK(cfg_pickands(cols(pseudo_observations(u), {3, 4, 5}), 1.5, Family::Joe, w).value ==
        cfg_pickands(cols(pseudo_observations(y), {3, 4, 5}), 1.5, Family::Joe, w).value);
}

TEST_CASE("block maxima", "[inference]") {
  {
    std::vector<Date> d{parse_iso_date("2001-03-01"), parse_iso_date("2001-03-02"), parse_iso_date("2001-03-03")};
    Matrix v(3, 1);
    v << 1, 5, 3;
    auto r = block_maxima(d, v, {3}, BlockRule::Month);
    REQUIRE(r.values.rows() == 1);
    CHECK(r.values(0, 0) == 5.0);
  }
  std::vector<Date> dates;
  std::vector<double> vals;
  for (int y = 1970; y < 2010; ++y)
    for (int mth = 1; mth <= 12; ++mth)
      for (int day = 1; day <= 28; ++day) {
        dates.push_back({y, mth, day});
        vals.push_back(std::sin(y * 31.0 + mth * 7.0 + day));
      }
  Matrix v = Eigen::Map<Matrix>(vals.data(), static_cast<Eigen::Index>(vals.size()), 1);
  std::set<int> sd{9, 10, 11, 12};
  auto one = block_maxima(std::span(dates).first(12 * 28), v.topRows(12 * 28), sd, BlockRule::Month);
  CHECK(one.values.rows() == 4);
  auto all = block_maxima(dates, v, sd, BlockRule::Month);
  CHECK(all.values.rows() == 160);
  CHECK(all.dropped_blocks == 0);
  auto yearly = block_maxima(dates, v, sd, BlockRule::Year);
  CHECK(yearly.values.rows() == 40);
  // a missing month is dropped and counted
  Matrix gap = v;
  for (std::size_t i = 0; i < dates.size(); ++i)
    if (dates[i].year == 1980 && dates[i].month == 10) gap(static_cast<Eigen::Index>(i), 0) = std::nan("");
  auto g2 = block_maxima(dates, gap, sd, BlockRule::Month);
  CHECK(g2.values.rows() == 159);
  CHECK(g2.dropped_blocks == 1);
  CHECK_THROWS_AS(block_maxima(dates, v, {}, BlockRule::Month), ValidationError);
  CHECK_THROWS_AS(parse_iso_date("2001-13-01"), ValidationError);
  CHECK_THROWS_AS(parse_iso_date("01/02/2003"), ValidationError);
  CHECK(parse_iso_date("1999-02-28T12:00:00").month == 2);
}
