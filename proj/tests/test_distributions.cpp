#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "doctest.h"
#include "hazardlab/distributions.hpp"
#include "hazardlab/special_functions.hpp"
#include "test_support.hpp"

using namespace hazardlab;

namespace {

double integrate_tail(auto f, double from) {
  boost::math::quadrature::exp_sinh<double> integrator;
  return integrator.integrate([&](double s) { return f(from + s); }, 0.0,
                              std::numeric_limits<double>::infinity(), 1e-14);
}

double integrate(auto f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 20, 1e-14);
}

std::vector<double> grid(double lo, double hi, int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(lo + (hi - lo) * i / (n - 1));
  return g;
}

}  // namespace

TEST_SUITE("distributions") {

TEST_CASE("generalized gamma density at nested cases") {
  CHECK(std::abs(gg_density(1.0, {1.0, 1.0, 1.0}) - std::exp(-1.0)) < 1e-15);
  CHECK(std::abs(gg_density(1.0, {1.0, 2.0, 1.0}) - 2.0 * std::exp(-1.0)) < 1e-15);
  CHECK_THROWS_AS(gg_density(0.0, {1.0, 1.0, 1.0}), std::domain_error);
  CHECK_THROWS_AS(gg_density(1.0, {-1.0, 1.0, 1.0}), std::domain_error);
}

TEST_CASE("nesting identities against closed-form densities") {
  for (double t : grid(0.05, 15.0, 60)) {
    for (double lambda : {0.3, 1.0, 2.2}) {
      for (double k : {0.4, 1.0, 3.7}) {
        const double gamma_pdf =
            std::pow(lambda, k) * std::pow(t, k - 1) * std::exp(-lambda * t) / std::tgamma(k);
        CHECK(hltest::rel_err(gg_density(t, {lambda, 1.0, k}), gamma_pdf) < 1e-12);
      }
      for (double p : {0.6, 1.0, 2.5}) {
        const double weibull_pdf =
            lambda * p * std::pow(lambda * t, p - 1) * std::exp(-std::pow(lambda * t, p));
        CHECK(hltest::rel_err(gg_density(t, {lambda, p, 1.0}), weibull_pdf) < 1e-12);
      }
      CHECK(hltest::rel_err(gg_density(t, {lambda, 1.0, 1.0}), lambda * std::exp(-lambda * t)) <
            1e-12);
    }
  }
}

TEST_CASE("survivor equals exp(-cumulative hazard)") {
  const std::vector<GGParams> params{{1.0, 1.0, 1.0}, {0.5, 1.5, 2.0}, {0.7, 0.8, 2.0},
                                     {2.0, 3.0, 0.5}, {1.3, 1.0, 4.0}};
  for (const auto& prm : params) {
    for (double t : grid(0.01, 10.0, 100)) {
      CHECK(std::abs(gg_survivor(t, prm) - std::exp(-gg_cumulative_hazard(t, prm))) < 1e-12);
    }
  }
  for (double t : grid(0.01, 10.0, 100)) {
    const auto sfh = lognormal_sfh(t, {0.3, 0.8});
    const double anc[] = {std::log(0.8)};
    const auto terms = baseline_terms(Family::LogNormal, t * std::exp(-0.3), anc);
    CHECK(std::abs(sfh.survivor - std::exp(-terms.cum_hazard)) < 1e-12);
  }
}

TEST_CASE("survivor and density against quadrature") {
  const GGParams prm{0.5, 1.5, 2.0};
  const auto f = [&](double t) { return gg_density(t, prm); };
  CHECK(std::abs(integrate(f, 0.0, 2.0) + integrate_tail(f, 2.0) - 1.0) < 1e-8);
  CHECK(std::abs(gg_survivor(2.0, prm) - integrate_tail(f, 2.0)) < 1e-10);
  CHECK(gg_survivor(0.0, prm) == 1.0);
  CHECK(std::abs(gg_survivor(1.0, {1.0, 1.0, 1.0}) - std::exp(-1.0)) < 1e-15);
  CHECK_THROWS_AS(gg_survivor(-0.1, prm), std::domain_error);
}

TEST_CASE("hazard values") {
  for (double t : {0.1, 1.0, 7.0, 40.0}) CHECK(std::abs(gg_hazard(t, {0.7, 1.0, 1.0}) - 0.7) < 1e-12);
  CHECK(std::abs(gg_hazard(1.0, {1.0, 2.0, 1.0}) - 2.0) < 1e-12);
  const GGParams prm{0.5, 0.8, 2.0};
  const auto f = [&](double t) { return gg_density(t, prm); };
  CHECK(hltest::rel_err(gg_hazard(3.0, prm), gg_density(3.0, prm) / integrate_tail(f, 3.0)) < 1e-10);
  // far tail, where S underflows
  CHECK(std::isfinite(gg_hazard(1e4, {1.0, 1.0, 2.0})));
  CHECK(std::abs(gg_hazard(1e4, {1.0, 1.0, 2.0}) - 1e4 / (1.0 + 1e4)) < 1e-8);
}

TEST_CASE("moments") {
  CHECK(std::abs(gg_moment(1, {2.0, 1.0, 1.0}) - 0.5) < 1e-14);
  CHECK(std::abs(gg_moment(1, {1.0, 1.0, 3.0}) - 3.0) < 1e-13);
  const GGParams prm{0.5, 1.5, 2.0};
  const auto m2 = [&](double t) { return t * t * gg_density(t, prm); };
  CHECK(hltest::rel_err(gg_moment(2, prm), integrate(m2, 0.0, 5.0) + integrate_tail(m2, 5.0)) <
        1e-8);
  for (const GGParams& q : {GGParams{0.5, 1.5, 2.0}, GGParams{1.2, 0.7, 0.8}, GGParams{3.0, 2.0, 5.0}}) {
    const double g0 = std::tgamma(q.k);
    const double mean = std::tgamma(q.k + 1.0 / q.p) / (q.lambda * g0);
    const double var = std::tgamma(q.k + 2.0 / q.p) / (q.lambda * q.lambda * g0) - mean * mean;
    CHECK(hltest::rel_err(gg_mean(q), mean) < 1e-10);
    CHECK(hltest::rel_err(gg_variance(q), var) < 1e-10);
  }
  CHECK_THROWS_AS(gg_moment(200, {1e-3, 0.01, 1.0}), std::overflow_error);
}

TEST_CASE("Weibull hazard monotonicity follows the shape") {
  for (double p : {0.5, 1.0, 1.8}) {
    int up = 0;
    int down = 0;
    int flat = 0;
    double prev = gg_hazard(0.1, {1.0, p, 1.0});
    for (double t = 0.2; t < 10.0; t += 0.1) {
      const double h = gg_hazard(t, {1.0, p, 1.0});
      if (std::abs(h - prev) < 1e-12) ++flat;
      else if (h > prev) ++up;
      else ++down;
      prev = h;
    }
    if (p > 1) CHECK((up > 0 && down == 0 && flat == 0));
    if (p == 1) CHECK((up == 0 && down == 0));
    if (p < 1) CHECK((down > 0 && up == 0 && flat == 0));
  }
}

TEST_CASE("gamma hazard tends to lambda") {
  CHECK(std::abs(gg_hazard(400.0, {0.8, 1.0, 2.5}) - 0.8) < 5e-3);
  CHECK(std::abs(gg_hazard(400.0, {0.8, 1.0, 0.5}) - 0.8) < 5e-3);
}

TEST_CASE("log-normal values and unimodal hazard") {
  const auto a = lognormal_sfh(1.0, {0.0, 1.0});
  CHECK(std::abs(a.survivor - 0.5) < 1e-15);
  CHECK(std::abs(a.density - 0.398942280401433) < 1e-12);
  CHECK(std::abs(a.hazard - 0.797884560802865) < 1e-12);
  CHECK(std::abs(lognormal_sfh(std::exp(1.7), {1.7, 1.0}).survivor - 0.5) < 1e-15);
  CHECK_THROWS_AS(lognormal_sfh(0.0, {0.0, 1.0}), std::domain_error);

  int sign_changes = 0;
  double prev_h = lognormal_sfh(0.05, {0.5, 0.6}).hazard;
  int prev_sign = 0;
  for (double t = 0.1; t < 60.0; t += 0.05) {
    const double h = lognormal_sfh(t, {0.5, 0.6}).hazard;
    const int sign = h > prev_h ? 1 : -1;
    if (prev_sign != 0 && sign != prev_sign) ++sign_changes;
    prev_sign = sign;
    prev_h = h;
  }
  CHECK(sign_changes == 1);
}

TEST_CASE("GEV values") {
  CHECK(std::abs(gev_cdf_pdf(0.0, {0.0, 1.0, 0.0}).cdf - std::exp(-1.0)) < 1e-15);
  CHECK(std::abs(gev_cdf_pdf(2.0, {2.0, 3.0, 0.3}).cdf - std::exp(-1.0)) < 1e-15);
  // support limits
  const auto below = gev_cdf_pdf(-5.0, {0.0, 1.0, 0.5});
  CHECK(below.cdf == 0.0);
  CHECK(below.pdf == 0.0);
  const auto above = gev_cdf_pdf(10.0, {0.0, 1.0, -0.2});
  CHECK(above.cdf == 1.0);
  CHECK(above.pdf == 0.0);
}

TEST_CASE("GEV pdf is the derivative of the cdf") {
  const GEVParams prm{0.0, 1.0, -0.2};
  for (double x : {-1.0, 0.0, 1.5, 3.0}) {
    const double h = 1e-5;
    const double fd = (gev_cdf_pdf(x + h, prm).cdf - gev_cdf_pdf(x - h, prm).cdf) / (2 * h);
    CHECK(std::abs(gev_cdf_pdf(x, prm).pdf - fd) < 1e-7);
  }
}

TEST_CASE("GEV moments") {
  const auto gumbel = gev_moments({0.0, 1.0, 0.0});
  CHECK(std::abs(gumbel.mean - std::numbers::egamma) < 1e-12);
  CHECK(std::abs(gumbel.variance - std::numbers::pi * std::numbers::pi / 6) < 1e-12);
  const auto heavy = gev_moments({0.0, 1.0, 1.2});
  CHECK_FALSE(heavy.mean_finite());
  CHECK(std::isinf(heavy.mean));
  CHECK_FALSE(gev_moments({0.0, 1.0, 0.6}).variance_finite());
  CHECK(gev_moments({0.0, 1.0, 0.6}).mean_finite());
}

TEST_CASE("GEV moments against Monte Carlo") {
  auto g = hltest::rng(11);
  const GEVParams prm{2.0, 3.0, 0.25};
  const int n = 10'000'000;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = -std::log(hltest::uniform(g));
    const double x = prm.mu + prm.sigma * (std::pow(e, -prm.xi) - 1.0) / prm.xi;
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  const auto m = gev_moments(prm);
  CHECK(hltest::rel_err(mean, m.mean) < 1e-2);
  CHECK(hltest::rel_err(var, m.variance) < 1e-2);
}

TEST_CASE("extreme-value link") {
  const auto a = ev_link({1.0, 1.0, 1.0});
  CHECK(a.alpha == 0.0);
  CHECK(a.sigma == 1.0);
  CHECK(a.k == 1.0);
  const auto b = ev_link({std::numbers::e, 2.0, 1.0});
  CHECK(std::abs(b.alpha + 1.0) < 1e-15);
  CHECK(b.sigma == 0.5);
  for (const GGParams& q : {GGParams{0.37, 1.9, 0.6}, GGParams{4.0, 0.25, 3.0}}) {
    const GGParams back = gg_from_ev(ev_link(q));
    CHECK(hltest::rel_err(back.lambda, q.lambda) < 1e-15);
    CHECK(hltest::rel_err(back.p, q.p) < 1e-15);
    CHECK(back.k == q.k);
  }
}

TEST_CASE("log-time density is the change of variables of the GG density") {
  const GGParams prm{0.8, 1.7, 2.3};
  const auto ev = ev_link(prm);
  for (double z : grid(-3.0, 3.0, 50)) {
    const double expected = gg_density(std::exp(z), prm) * std::exp(z);
    CHECK(std::abs(ev_log_time_density(z, ev) - expected) < 1e-10);
  }
}

TEST_CASE("family metadata") {
  CHECK(ancillary_arity(Family::Exponential) == 0);
  CHECK(ancillary_arity(Family::GeneralizedGamma) == 2);
  CHECK(ancillary_names(Family::LogNormal)[0] == "ln_sigma");
  for (auto f : {Family::Exponential, Family::Weibull, Family::Gamma, Family::GeneralizedGamma,
                 Family::LogNormal}) {
    CHECK(parse_family(family_name(f)) == f);
  }
  CHECK_THROWS(parse_family("cauchy"));
}

TEST_CASE("baseline terms agree with the GG functions") {
  // Weibull with p = 1.6 at u: H = u^p
  const double lp[] = {std::log(1.6)};
  for (double u : {0.2, 1.0, 4.0}) {
    const auto w = baseline_terms(Family::Weibull, u, lp);
    CHECK(std::abs(w.cum_hazard - gg_cumulative_hazard(u, {1.0, 1.6, 1.0})) < 1e-12);
    CHECK(std::abs(std::exp(w.log_hazard) - gg_hazard(u, {1.0, 1.6, 1.0})) < 1e-12);
  }
  const auto e = baseline_terms(Family::Exponential, 2.5, {});
  CHECK(e.log_hazard == 0.0);
  CHECK(e.cum_hazard == 2.5);
}

}
