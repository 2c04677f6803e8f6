#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "archimax/stdf.hpp"

using namespace archimax;
using Catch::Approx;

namespace {
std::vector<Stdf> closed_form_stdfs(int d) {
  std::vector<Stdf> out{Stdf::independence(d), Stdf::logistic(1.0, d), Stdf::logistic(1.25, d), Stdf::logistic(4.0, d)};
  out.push_back(alpha_transform(Stdf::logistic(1.5, d), 0.5));
  out.push_back(alpha_transform(Stdf::independence(d), 2.0 / 3.0));
  return out;
}

std::vector<double> random_vec(std::mt19937_64& g, int d) {
  std::uniform_real_distribution<double> U(0.0, 3.0);
  std::vector<double> x(d);
  for (auto& v : x) v = U(g);
  return x;
}
}  // namespace

TEST_CASE("stdf evaluation examples", "[stdf]") {
  CHECK(Stdf::logistic(1.0, 2)({1.0, 1.0}) == Approx(2.0).epsilon(1e-15));
  CHECK(Stdf::logistic(1.25, 2)({1.0, 1.0}) == Approx(std::pow(2.0, 0.8)).epsilon(1e-14));
  CHECK(Stdf::independence(3)({1.0, 2.0, 0.5}) == 3.5);
  for (int d : {2, 3, 5}) {
    for (const auto& s : closed_form_stdfs(d)) {
      std::vector<double> e(d, 0.0);
      e[1] = 1.0;
      CHECK(s(e) == Approx(1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("stdf argument validation", "[stdf]") {
  auto s = Stdf::logistic(2.0, 2);
  CHECK_THROWS_AS(s({1.0, 1.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(s({-1.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(Stdf::logistic(0.5, 2), ValidationError);
  CHECK_THROWS_AS(alpha_transform(s, 0.0), ValidationError);
  CHECK_THROWS_AS(alpha_transform(s, 1.5), ValidationError);
}

TEST_CASE("pickands function", "[stdf]") {
  auto l2 = Stdf::logistic(2.0, 2);
  CHECK(pickands_eval(l2, std::vector<double>{0.5, 0.5}) == Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
  CHECK(pickands_eval(l2, std::vector<double>{1.0, 0.0}) == 1.0);
  auto ind = Stdf::independence(3);
  CHECK(pickands_eval(ind, std::vector<double>{0.2, 0.3, 0.5}) == Approx(1.0).epsilon(1e-15));
  // tolerance bands: exact, silent renormalization, error
  CHECK_NOTHROW(pickands_eval(l2, std::vector<double>{0.5, 0.5 + 1e-13}));
  CHECK(pickands_eval(l2, std::vector<double>{0.5, 0.5 + 1e-10}) ==
        Approx(pickands_eval(l2, std::vector<double>{0.5, 0.5})).epsilon(1e-12));
  CHECK_THROWS_AS(pickands_eval(l2, std::vector<double>{0.5, 0.6}), ValidationError);
  std::mt19937_64 g(5);
  for (int rep = 0; rep < 200; ++rep) {
    auto w = random_vec(g, 3);
    double s = w[0] + w[1] + w[2];
    for (auto& v : w) v /= s;
    s = w[0] + w[1];
    w[2] = 1.0 - s;
    for (const auto& ell : closed_form_stdfs(3)) {
      const double a = pickands_eval(ell, w);
      CHECK(a <= 1.0 + 1e-12);
      CHECK(a >= std::max({w[0], w[1], w[2]}) - 1e-12);
    }
  }
}

TEST_CASE("alpha transform", "[stdf]") {
  auto l = Stdf::logistic(1.7, 3);
  auto same = alpha_transform(l, 1.0);
  CHECK(same.kind() == Stdf::Kind::Logistic);
  CHECK(same.vartheta() == 1.7);
  std::mt19937_64 g(7);
  for (double vt : {1.0, 1.25, 3.0}) {
    for (double a : {0.9, 0.5, 1.0 / 3.0}) {
      auto t = alpha_transform(Stdf::logistic(vt, 3), a);
      auto ref = Stdf::logistic(vt / a, 3);
      for (int i = 0; i < 100; ++i) {
        auto x = random_vec(g, 3);
        CHECK(std::abs(t(x) - ref(x)) <= 1e-12 * std::max(1.0, ref(x)));
      }
    }
  }
  // Joe theta = 2 cluster: logistic 1.5 transformed with alpha = 1/2
  auto joe3 = alpha_transform(Stdf::logistic(1.5, 2), 0.5);
  CHECK(2.0 - joe3({1.0, 1.0}) == Approx(2.0 - std::pow(2.0, 1.0 / 3.0)).epsilon(1e-13));
  CHECK(2.0 - std::pow(2.0, 1.0 / 3.0) == Approx(0.7401).margin(1e-4));
}

TEST_CASE("d-norm Monte Carlo", "[stdf]") {
  auto co = comonotone_w_sampler(3);
  auto r0 = dnorm_mc_eval(co, std::vector<double>{0.0, 0.0, 0.0}, 100, 1);
  CHECK(r0.estimate == 0.0);
  CHECK(r0.std_error == 0.0);
  auto r1 = dnorm_mc_eval(co, std::vector<double>{1.0, 2.0, 3.0}, 1000, 1);
  CHECK(r1.estimate == 3.0);
  CHECK(r1.std_error == 0.0);
  auto lw = logistic_w_sampler(4.0, 2);
  auto r2 = dnorm_mc_eval(lw, std::vector<double>{1.0, 1.0}, 1000000, 2024);
  CHECK(std::abs(r2.estimate - std::pow(2.0, 0.25)) < 3 * r2.std_error);
  CHECK(r2.std_error > 0.0);
  // unit-mean check of each W coordinate through the unit vector
  auto r3 = dnorm_mc_eval(lw, std::vector<double>{0.0, 1.0}, 200000, 3);
  CHECK(std::abs(r3.estimate - 1.0) < 4 * r3.std_error);
  auto ind = independence_w_sampler(3);
  auto r4 = dnorm_mc_eval(ind, std::vector<double>{1.0, 2.0, 0.5}, 300000, 4);
  CHECK(std::abs(r4.estimate - 3.5) < 4 * r4.std_error);
}

TEST_CASE("d-norm Monte Carlo is thread-count independent", "[stdf][determinism]") {
  auto lw = logistic_w_sampler(2.0, 3);
  std::vector<double> x{0.3, 1.0, 2.0};
  set_thread_cap(1);
  auto a = dnorm_mc_eval(lw, x, 50000, 99);
  set_thread_cap(4);
  auto b = dnorm_mc_eval(lw, x, 50000, 99);
  set_thread_cap(0);
  CHECK(a.estimate == b.estimate);
  CHECK(a.std_error == b.std_error);
}

TEST_CASE("upper tail coefficient", "[stdf]") {
  CHECK(upper_tail_coeff(Stdf::independence(2)) == 0.0);
  CHECK(upper_tail_coeff(Stdf::logistic(1.25, 2)) == Approx(2.0 - std::pow(2.0, 0.8)).epsilon(1e-14));
  CHECK(upper_tail_coeff(Stdf::logistic(1.25, 2)) == Approx(0.2589).margin(1e-4));
  CHECK(upper_tail_coeff(Stdf::logistic(4.0, 2)) == Approx(0.8108).margin(1e-4));
  CHECK_THROWS_AS(upper_tail_coeff(Stdf::logistic(2.0, 3)), ValidationError);
}

TEST_CASE("stdf invariants", "[stdf][property]") {
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> C(1e-3, 10.0), L(0.0, 1.0);
  for (int d : {2, 3, 4}) {
    for (const auto& ell : closed_form_stdfs(d)) {
      for (int rep = 0; rep < 100; ++rep) {
        auto x = random_vec(g, d), y = random_vec(g, d);
        const double c = C(g), lam = L(g);
        std::vector<double> cx(d), mix(d);
        for (int i = 0; i < d; ++i) cx[i] = c * x[i], mix[i] = lam * x[i] + (1 - lam) * y[i];
        CHECK(std::abs(ell(cx) - c * ell(x)) < 1e-10 * std::max(1.0, c * ell(x)));
        const double lx = ell(x);
        CHECK(lx >= *std::max_element(x.begin(), x.end()) - 1e-12);
        CHECK(lx <= std::accumulate(x.begin(), x.end(), 0.0) + 1e-12);
        CHECK(ell(mix) <= lam * ell(x) + (1 - lam) * ell(y) + 1e-12);
      }
    }
  }
  // composition of alpha transforms
  auto base = Stdf::logistic(1.3, 3);
  for (double a : {0.8, 0.5}) {
    for (double b : {0.9, 0.4}) {
      auto t1 = alpha_transform(alpha_transform(base, a), b);
      auto t2 = alpha_transform(base, a * b);
      for (int rep = 0; rep < 50; ++rep) {
        auto x = random_vec(g, 3);
        CHECK(std::abs(t1(x) - t2(x)) < 1e-10);
      }
    }
  }
  // Monte Carlo variant within 3 standard errors of the bounds
  auto lw = logistic_w_sampler(2.0, 3);
  for (int rep = 0; rep < 10; ++rep) {
    auto x = random_vec(g, 3);
    auto r = dnorm_mc_eval(lw, x, 20000, 100 + rep);
    CHECK(r.estimate >= *std::max_element(x.begin(), x.end()) - 3 * r.std_error);
    CHECK(r.estimate <= std::accumulate(x.begin(), x.end(), 0.0) + 3 * r.std_error);
  }
}

TEST_CASE("margins and Monte Carlo stdf", "[stdf]") {
  auto l = Stdf::logistic(2.0, 4);
  std::vector<int> idx{0, 2};
  auto m = l.margin(idx);
  CHECK(m.dim() == 2);
  CHECK(m({1.0, 1.0}) == Approx(std::sqrt(2.0)).epsilon(1e-14));
  auto mc = Stdf::dnorm_mc(logistic_w_sampler(2.0, 2), 400000, 17);
  CHECK_FALSE(mc.closed_form());
  auto r = dnorm_mc_eval(mc.sampler(), std::vector<double>{1.0, 1.0}, 400000, 17);
  CHECK(mc({1.0, 1.0}) == r.estimate);
  CHECK(std::abs(mc({1.0, 1.0}) - std::sqrt(2.0)) < 4 * r.std_error);
  auto at = alpha_transform(Stdf::logistic(1.5, 3), 0.5);
  REQUIRE(at.logistic_parameter().has_value());
  CHECK(*at.logistic_parameter() == Approx(3.0));
}
