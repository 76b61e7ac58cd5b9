#include "hazardlab/serialization.hpp"

#include <cmath>

#include "hazardlab/special_functions.hpp"

namespace hazardlab {

namespace {

nlohmann::json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? number(*v) : nlohmann::json(nullptr);
}

nlohmann::json parameter_entry(const FitResult& fit, Eigen::Index i) {
  const double est = fit.estimates()(i);
  const double se_model = std::sqrt(fit.cov_model(i, i));
  const double se_robust = fit.cov_robust ? std::sqrt((*fit.cov_robust)(i, i)) : NAN;
  const double se = fit.cov_robust ? se_robust : se_model;
  const double z = est / se;
  const double p = std::isfinite(z) ? 2.0 * std::exp(std_normal_log_sf(std::abs(z))) : NAN;
  return {{"name", fit.names[i]}, {"estimate", number(est)}, {"se_model", number(se_model)},
          {"se_robust", number(se_robust)}, {"z", number(z)}, {"p", number(p)}};
}

}  // namespace

nlohmann::json to_json(const ModelSpec& spec) {
  nlohmann::json j;
  j["label"] = spec.label();
  j["family"] = spec.family ? nlohmann::json(std::string(family_name(*spec.family))) : nullptr;
  j["metric"] = std::string(metric_name(spec.metric));
  j["frailty"] = std::string(frailty_name(spec.frailty));
  j["covariates"] = spec.covariates;
  j["ancillary_covariates"] = spec.ancillary_covariates;
  j["rate_link"] = spec.rate_link;
  j["robust"] = spec.options.robust;
  j["ties"] = std::string(ties_name(spec.options.ties));
  j["tolerance"] = spec.options.tolerance;
  j["max_iterations"] = spec.options.max_iterations;
  return j;
}

nlohmann::json to_json(const FitResult& fit) {
  nlohmann::json j;
  j["spec"] = to_json(fit.spec);
  const auto nb = fit.params.beta.size();
  const auto na = fit.params.ancillary.size();
  j["coefficients"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < nb; ++i) j["coefficients"].push_back(parameter_entry(fit, i));
  j["ancillary"] = nlohmann::json::array();
  for (Eigen::Index i = nb; i < nb + na; ++i) j["ancillary"].push_back(parameter_entry(fit, i));
  j["ln_theta"] = fit.params.ln_theta ? parameter_entry(fit, nb + na) : nlohmann::json(nullptr);
  j["loglik"] = number(fit.loglik);
  j["k1"] = fit.k1();
  j["k2"] = fit.k2();
  j["aic"] = number(fit.aic());
  j["bic"] = number(fit.bic());
  j["aic_comparable"] = !fit.spec.is_cox();
  j["n"] = fit.n;
  j["n_events"] = fit.n_events;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["frailty_at_bound"] = fit.frailty_at_bound;
  j["gradient_max_norm"] = number(fit.gradient_max_norm);
  j["message"] = fit.message;
  return j;
}

nlohmann::json to_json(const TestResult& test) {
  return {{"name", test.name}, {"statistic", number(test.statistic)}, {"df", test.df},
          {"p_value", number(test.p_value)}};
}

nlohmann::json to_json(const ResidualSummary& s) {
  return {{"n", s.n},
          {"mean", number(s.mean)},
          {"median", number(s.median)},
          {"max", number(s.max)},
          {"min", number(s.min)},
          {"std_dev", number(s.std_dev)},
          {"skewness", optional_number(s.skewness)},
          {"kurtosis", optional_number(s.kurtosis)},
          {"sum", number(s.sum)},
          {"sum_sq_dev", number(s.sum_sq_dev)},
          {"jarque_bera", s.jarque_bera ? to_json(*s.jarque_bera) : nlohmann::json(nullptr)}};
}

double aic_from_json(const nlohmann::json& fit) {
  return -2.0 * fit.at("loglik").get<double>() +
         2.0 * (fit.at("k1").get<int>() + fit.at("k2").get<int>());
}

}  // namespace hazardlab
