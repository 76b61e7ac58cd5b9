#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "hazardlab/inference.hpp"
#include "hazardlab/serialization.hpp"
#include "test_support.hpp"

using namespace hazardlab;

namespace {

const std::vector<std::string> kX{"x1", "x2"};

// x2 = 1 has hazard 2.5 before t = 0.5 and 0.25 after; x2 = 0 has hazard 1.
SurvivalData crossing_hazards(int n, std::mt19937_64& g) {
  SurvivalData d = hltest::design(n, g);
  for (int i = 0; i < n; ++i) {
    const double e = -std::log(hltest::uniform(g)) / std::exp(0.3 * d.covariates(i, 0));
    if (d.covariates(i, 1) == 0.0) {
      d.time[i] = e;
    } else {
      d.time[i] = e < 1.25 ? e / 2.5 : 0.5 + (e - 1.25) / 0.25;
    }
  }
  hltest::censor(d, 0.2, g);
  return d;
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("information criteria") {
  FitResult fit;
  fit.spec = ModelSpec::parametric(Family::Exponential, Metric::AFT, {"a", "b", "c"});
  fit.loglik = -300.0;
  fit.n = 100;
  fit.converged = true;
  const auto ic = information_criteria(fit);
  CHECK(ic.aic == 608.0);
  CHECK(std::abs(ic.bic - (600.0 + 4.0 * std::log(100.0))) < 1e-12);
  CHECK(ic.comparable);

  FitResult cox;
  cox.spec = ModelSpec::cox({"a"});
  cox.loglik = -10.0;
  cox.n = 20;
  cox.converged = true;
  CHECK_FALSE(information_criteria(cox).comparable);
}

TEST_CASE("AIC and BIC rebuild exactly from serialized fits") {
  auto g = hltest::rng(61);
  const auto d = hltest::lognormal_aft(300, {0.5, 0.2, 0.2, 0.6}, g);
  for (auto fam : {Family::Exponential, Family::Weibull, Family::LogNormal}) {
    const auto fit = fit_mle(ModelSpec::parametric(fam, Metric::AFT, kX), d);
    const auto j = nlohmann::json::parse(to_json(fit).dump());
    CHECK(aic_from_json(j) == j.at("aic").get<double>());
    CHECK(j.at("aic").get<double>() == fit.aic());
    CHECK(j.at("bic").get<double>() == fit.bic());
  }
}

TEST_CASE("likelihood-ratio test") {
  auto g = hltest::rng(62);
  const auto d = hltest::weibull_aft(1000, {0.5, 0.3, -0.2, 2.0}, g);
  const auto expo = fit_mle(ModelSpec::parametric(Family::Exponential, Metric::AFT, kX), d);
  const auto weib = fit_mle(ModelSpec::parametric(Family::Weibull, Metric::AFT, kX), d);

  SUBCASE("identical fits") {
    const auto t = lr_test(weib, weib, 1);
    CHECK(t.statistic == 0.0);
    CHECK(t.p_value == 1.0);
  }
  SUBCASE("exponential restriction rejected on Weibull(p = 2) data") {
    const auto t = lr_test(expo, weib, 1);
    CHECK(t.statistic > 0.0);
    CHECK(t.p_value < 0.001);
    CHECK(t.df == 1);
    CHECK(std::abs(t.statistic - 2.0 * (weib.loglik - expo.loglik)) < 1e-12);
  }
  SUBCASE("non-nested pairs are refused") {
    const auto ln = fit_mle(ModelSpec::parametric(Family::LogNormal, Metric::AFT, kX), d);
    CHECK_FALSE(is_nested(ln, weib));
    CHECK_THROWS_AS(lr_test(ln, weib, 1), std::invalid_argument);
    CHECK_THROWS_AS(lr_test(weib, expo, 1), std::invalid_argument);
  }
  SUBCASE("covariate subsets nest") {
    const auto small = fit_mle(ModelSpec::parametric(Family::Weibull, Metric::AFT, {"x1"}), d);
    CHECK(is_nested(small, weib));
    CHECK(lr_test(small, weib, 1).statistic >= 0.0);
  }
  SUBCASE("a full fit with lower likelihood is inconsistent") {
    FitResult bad = weib;
    bad.loglik = expo.loglik - 1.0;
    CHECK_THROWS_AS(lr_test(expo, bad, 1), InconsistentFitsError);
  }
  SUBCASE("unconverged fits are refused") {
    FitResult bad = weib;
    bad.converged = false;
    CHECK_THROWS(lr_test(expo, bad, 1));
  }
}

TEST_CASE("Wald test on one coefficient is the squared z") {
  auto g = hltest::rng(63);
  const auto d = hltest::lognormal_aft(362, {0.5, 0.2, 0.2, 0.6}, g);
  auto spec = ModelSpec::parametric(Family::LogNormal, Metric::AFT, kX);
  spec.options.robust = true;
  const auto fit = fit_mle(spec, d);
  const auto j = to_json(fit);
  for (int c = 1; c <= 2; ++c) {
    const double z = j["coefficients"][c]["z"].get<double>();
    const auto w = wald_test(fit, std::vector<Eigen::Index>{c});
    CHECK(std::abs(w.statistic - z * z) < 1e-9);
    CHECK(w.df == 1);
  }
  const auto joint = wald_test(fit, std::vector<std::string>{"x1", "x2"});
  CHECK(joint.df == 2);
  CHECK(joint.name == "Wald x1,x2 = 0");
  CHECK_THROWS_AS(wald_test(fit, std::vector<std::string>{"zzz"}), std::invalid_argument);
}

TEST_CASE("Wald test refuses a singular restricted covariance") {
  FitResult fit;
  fit.spec = ModelSpec::parametric(Family::Exponential, Metric::AFT, {"a"});
  fit.params.beta = Eigen::Vector2d(0.1, 0.2);
  fit.names = parameter_names(fit.spec);
  fit.cov_model = Eigen::Matrix2d::Zero();
  fit.converged = true;
  CHECK_THROWS_AS(wald_test(fit, std::vector<Eigen::Index>{1}), std::domain_error);
  fit.cov_model(1, 1) = NAN;
  CHECK_THROWS_AS(wald_test(fit, std::vector<Eigen::Index>{1}), std::domain_error);
}

TEST_CASE("Wald test size under all-zero coefficients") {
  auto g = hltest::rng(64);
  const auto spec = ModelSpec::parametric(Family::Exponential, Metric::PH, kX);
  int rejected = 0;
  const int reps = 400;
  for (int r = 0; r < reps; ++r) {
    const auto d = hltest::exponential_ph(300, {0.2, 0.0, 0.0, 1}, g, 0.2);
    const auto fit = fit_mle(spec, d);
    rejected += wald_test(fit, std::vector<std::string>{"x1", "x2"}).p_value < 0.05;
  }
  const double rate = static_cast<double>(rejected) / reps;
  CHECK(std::abs(rate - 0.05) <= 0.025);
}

TEST_CASE("PH test size under exact proportional hazards, KM time scale") {
  auto g = hltest::rng(65);
  int kept = 0;
  int kept_identity = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    const auto d = hltest::weibull_aft(300, {0.3, 0.4, -0.5, 1.3}, g, 0.2);
    const auto cox = fit_cox(d, kX);
    kept += ph_assumption_test(cox, d, TimeTransform::KaplanMeier).global.p_value >= 0.05;
    kept_identity += ph_assumption_test(cox, d).global.p_value >= 0.05;
  }
  const double rate = static_cast<double>(kept) / reps;
  CHECK(std::abs(rate - 0.95) <= 0.04);
  // the identity scale is conservative with skewed event times, never liberal
  CHECK(static_cast<double>(kept_identity) / reps >= 0.91);
}

TEST_CASE("PH test detects a time-varying effect") {
  auto g = hltest::rng(66);
  const auto d = crossing_hazards(600, g);
  const auto cox = fit_cox(d, kX);
  for (auto tr : {TimeTransform::Identity, TimeTransform::KaplanMeier, TimeTransform::Rank,
                  TimeTransform::Log}) {
    CAPTURE(time_transform_name(tr));
    const auto ph = ph_assumption_test(cox, d, tr);
    CHECK(ph.global.df == 2);
    CHECK(ph.global.p_value < 0.01);
    REQUIRE(ph.per_covariate.size() == 2);
    CHECK(ph.per_covariate[1].p_value < 0.01);
    CHECK(ph.per_covariate[1].name == "PH x2");
    CHECK(parse_time_transform(time_transform_name(tr)) == tr);
  }
}

TEST_CASE("PH test needs more events than covariates") {
  SurvivalData d;
  d.time = {1, 2, 3, 4};
  d.event = {1, 1, 0, 0};
  d.names = {"a", "b"};
  d.covariates.resize(4, 2);
  d.covariates << 0.1, 1, 0.5, 0, 0.2, 1, 0.9, 0;
  FitResult cox;
  cox.spec = ModelSpec::cox({"a", "b"});
  cox.params.beta = Eigen::Vector2d::Zero();
  cox.names = {"a", "b"};
  cox.cov_model = Eigen::Matrix2d::Identity();
  cox.converged = true;
  CHECK_THROWS_AS(ph_assumption_test(cox, d), std::invalid_argument);
}

TEST_CASE("PH test requires a Cox fit") {
  auto g = hltest::rng(67);
  const auto d = hltest::weibull_aft(100, {0.3, 0.4, -0.5, 1.3}, g);
  const auto fit = fit_mle(ModelSpec::parametric(Family::Weibull, Metric::AFT, kX), d);
  CHECK_THROWS_AS(ph_assumption_test(fit, d), std::invalid_argument);
}

TEST_CASE("SSR goodness of fit") {
  SUBCASE("unit Cox-Snell residuals give zero") {
    SurvivalData d;
    d.time.assign(10, 2.0);
    d.event.assign(10, 1);
    d.covariates.resize(10, 0);
    const auto fit = fit_mle(ModelSpec::parametric(Family::Exponential, Metric::PH, {}), d);
    CHECK(ssr_goodness(fit, d) < 1e-24);
  }
  SUBCASE("equals the sum of squared d - r") {
    auto g = hltest::rng(68);
    const auto d = hltest::weibull_aft(200, {0.3, 0.4, -0.5, 1.3}, g, 0.3);
    const auto fit = fit_mle(ModelSpec::parametric(Family::Weibull, Metric::AFT, kX), d);
    const auto r = fitted_cumulative_hazard(fit, d);
    double expected = 0.0;
    for (Eigen::Index i = 0; i < d.n(); ++i) expected += std::pow(d.event[i] - r(i), 2);
    CHECK(std::abs(ssr_goodness(fit, d) - expected) < 1e-9);
  }
}

}
