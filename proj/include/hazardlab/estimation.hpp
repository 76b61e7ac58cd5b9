#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hazardlab/data_pipeline.hpp"
#include "hazardlab/distributions.hpp"

namespace hazardlab {

enum class Metric { AFT, PH, PartialLikelihood };
enum class Frailty { None, Gamma, InverseGaussian };
enum class Ties { Efron, Breslow };

std::string_view metric_name(Metric metric);
Metric parse_metric(std::string_view name);  // "aft", "ph", "cox"
std::string_view frailty_name(Frailty frailty);
Frailty parse_frailty(std::string_view name);  // "none", "gamma", "invgauss"
std::string_view ties_name(Ties ties);
Ties parse_ties(std::string_view name);  // "efron", "breslow"

struct FitOptions {
  double tolerance = 1e-8;  // max-norm of the gradient
  int max_iterations = 100;
  bool robust = false;
  Ties ties = Ties::Efron;
};

/// Family x metric x frailty. An empty family means the Cox model.
struct ModelSpec {
  std::optional<Family> family;
  Metric metric = Metric::AFT;
  Frailty frailty = Frailty::None;
  std::vector<std::string> covariates;
  /// Covariates entering the log of each ancillary parameter, in the order of
  /// ancillary_names(family). Empty (the default) means a constant ancillary.
  std::vector<std::vector<std::string>> ancillary_covariates;
  /// AFT only: report the location as ln λ = x'β, the log inverse time scale,
  /// so coefficients are the negated AFT coefficients.
  bool rate_link = false;
  FitOptions options;

  bool is_cox() const { return !family.has_value(); }

  /// Throws std::invalid_argument for inconsistent combinations.
  void validate() const;

  std::string label() const;  // e.g. "lognormal/aft/gamma"

  static ModelSpec parametric(Family family, Metric metric, std::vector<std::string> covariates,
                              Frailty frailty = Frailty::None);
  static ModelSpec cox(std::vector<std::string> covariates, Ties ties = Ties::Efron);
};

/// Durations, event flags and named covariate columns.
struct SurvivalData {
  std::vector<double> time;
  std::vector<int> event;
  std::vector<std::string> names;
  Eigen::MatrixXd covariates;  // n x names.size()
  std::vector<std::string> labels;  // optional row labels (spell start months)

  Eigen::Index n() const { return static_cast<Eigen::Index>(time.size()); }
  int events() const;
  Eigen::Index column(std::string_view name) const;  // throws if absent
  void validate() const;

  /// Columns "recession", "price_decline" and "interest_rate".
  static SurvivalData from_spells(const SpellSet& spells);
};

/// Covariate names accepted by SurvivalData::from_spells.
const std::vector<std::string>& spell_covariate_names();

/// Parameters in natural blocks. `beta` holds the location coefficients with
/// the intercept first for parametric models (no intercept for Cox).
/// `ancillary` holds, per ancillary parameter, its log-scale constant followed
/// by its link coefficients.
struct ParamVector {
  Eigen::VectorXd beta;
  Eigen::VectorXd ancillary;
  std::optional<double> ln_theta;

  Eigen::VectorXd flatten() const;
  static ParamVector unflatten(const ModelSpec& spec, const Eigen::VectorXd& flat);
};

/// Number of free parameters of the spec and their names in flattened order.
int parameter_count(const ModelSpec& spec);
std::vector<std::string> parameter_names(const ModelSpec& spec);

struct FitResult {
  ModelSpec spec;
  ParamVector params;
  std::vector<std::string> names;  // flattened parameter names
  double loglik = 0;
  Eigen::MatrixXd cov_model;
  std::optional<Eigen::MatrixXd> cov_robust;
  int iterations = 0;
  bool converged = false;
  std::string message;  // diagnostics when not converged
  bool frailty_at_bound = false;  // ln_theta held at its lower bound; its variance is NaN
  double gradient_max_norm = 0;
  int n = 0;
  int n_events = 0;
  Eigen::VectorXd covariate_means;  // over the fitted data, in predictor_names() order

  /// spec.covariates followed by any further ancillary-link covariates.
  std::vector<std::string> predictor_names() const;

  Eigen::VectorXd estimates() const { return params.flatten(); }
  /// Robust covariance when present, model-based otherwise.
  const Eigen::MatrixXd& covariance() const;

  int k1() const;  // covariate coefficients (excluding the intercept)
  int k2() const;  // distribution parameters: intercept, ancillaries, frailty
  double aic() const;
  double bic() const;
};

class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularHessianError : public EstimationError {
 public:
  explicit SingularHessianError(int iteration);
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

class NonFiniteLoglikError : public EstimationError {
 public:
  explicit NonFiniteLoglikError(Eigen::Index spell);
  Eigen::Index spell() const noexcept { return spell_; }

 private:
  Eigen::Index spell_;
};

/// Parametric log-likelihood. Throws NonFiniteLoglikError naming the first
/// spell whose contribution is not finite.
double loglik(const ModelSpec& spec, const SurvivalData& data, const ParamVector& params);

struct ScoreHessian {
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

/// Gradient and Hessian of loglik (or of the partial log-likelihood for Cox).
ScoreHessian score_hessian(const ModelSpec& spec, const SurvivalData& data,
                           const ParamVector& params);

/// Per-spell score contributions, one row per spell (Cox: score residuals).
Eigen::MatrixXd score_contributions(const ModelSpec& spec, const SurvivalData& data,
                                    const ParamVector& params);

/// Cox partial log-likelihood.
double partial_loglik(const ModelSpec& spec, const SurvivalData& data, const ParamVector& params);

/// Starting values used by fit_mle.
ParamVector initial_params(const ModelSpec& spec, const SurvivalData& data);

FitResult fit_mle(const ModelSpec& spec, const SurvivalData& data);
FitResult fit_mle(const ModelSpec& spec, const SpellSet& spells);
FitResult fit_mle(const ModelSpec& spec, const SurvivalData& data, const ParamVector& start);

FitResult fit_cox(const SurvivalData& data, const std::vector<std::string>& covariates,
                  Ties ties = Ties::Efron, FitOptions options = {});
FitResult fit_cox(const SpellSet& spells, Ties ties = Ties::Efron);

/// Sandwich covariance, scaled by n/(n-k-1) with k the number of covariates.
Eigen::MatrixXd robust_covariance(const FitResult& fit, const SurvivalData& data);

enum class PredictKind { Survivor, Hazard, CumHazard };

/// `covariates` holds values for fit.predictor_names() (no intercept).
double predict(const FitResult& fit, const Eigen::VectorXd& covariates, double t, PredictKind kind);

/// exp(x'beta) for AFT fits, the multiplier on baseline survival time.
double acceleration_factor(const FitResult& fit, const Eigen::VectorXd& covariates);

struct HazardPeak {
  double t_star = 0;
  double h_star = 0;
};

/// Maximizes the predicted hazard over [0.01, 60] months. Throws
/// std::domain_error when the hazard is monotone there.
HazardPeak hazard_peak(const FitResult& fit, const Eigen::VectorXd& covariates);

/// Baseline cumulative hazard increments of a Cox fit at each spell's own
/// duration, multiplied by its relative risk: the Cox-Snell residuals.
Eigen::VectorXd cox_cumulative_hazard(const FitResult& fit, const SurvivalData& data);

/// Fitted cumulative hazard at each spell's duration: the frailty-marginal
/// Λ for parametric fits, the Breslow/Efron estimate for Cox fits.
Eigen::VectorXd fitted_cumulative_hazard(const FitResult& fit, const SurvivalData& data);

/// Location index per spell: x'β for parametric fits (as reported, so it is
/// the log inverse time scale under a rate link), x'β for Cox fits.
Eigen::VectorXd linear_predictor(const FitResult& fit, const SurvivalData& data);

struct SchoenfeldResiduals {
  std::vector<double> times;  // one per event, in increasing time order
  Eigen::MatrixXd values;     // events x covariates
};

/// Schoenfeld residuals of a Cox fit (averaged over the tie correction).
SchoenfeldResiduals schoenfeld_residuals(const FitResult& fit, const SurvivalData& data);

/// Regression of a distribution parameter on covariates.
/// `parameter` is "rate" (ln of the inverse time scale) or an ancillary name.
struct ParameterLink {
  std::string parameter;
  std::vector<std::string> covariates;
};

FitResult parameter_link_fit(Family family, const ParameterLink& link, const SurvivalData& data,
                             Frailty frailty = Frailty::None, FitOptions options = {});

}  // namespace hazardlab
