#pragma once

#include <span>
#include <string>
#include <string_view>

namespace hazardlab {

// ---------------------------------------------------------------------------
// Generalized gamma family (Stacy form)
// ---------------------------------------------------------------------------

/// f(t) = λp(λt)^{pk-1} exp{-(λt)^p} / Γ(k). λ is an inverse time scale.
/// p = 1 gives the gamma, k = 1 the Weibull, p = k = 1 the exponential.
struct GGParams {
  double lambda = 1.0;
  double p = 1.0;
  double k = 1.0;

  /// Throws std::domain_error unless all three are finite and positive.
  void validate() const;
};

double gg_log_density(double t, const GGParams& params);
double gg_density(double t, const GGParams& params);
double gg_log_survivor(double t, const GGParams& params);
double gg_survivor(double t, const GGParams& params);

/// f/S, computed as exp(ln f - ln S) so it stays finite in the far tail.
double gg_hazard(double t, const GGParams& params);

/// Λ(t) = -ln S(t).
double gg_cumulative_hazard(double t, const GGParams& params);

/// E(T^r) = Γ(k + r/p) / (λ^r Γ(k)). Throws std::overflow_error when the
/// result is not representable.
double gg_moment(int r, const GGParams& params);
double gg_mean(const GGParams& params);
double gg_variance(const GGParams& params);

// ---------------------------------------------------------------------------
// Log-normal
// ---------------------------------------------------------------------------

struct LogNormalParams {
  double mu = 0.0;     // mean of ln T
  double sigma = 1.0;  // sd of ln T

  void validate() const;
};

struct SurvivalTriple {
  double survivor;
  double density;
  double hazard;
};

SurvivalTriple lognormal_sfh(double t, const LogNormalParams& params);

// ---------------------------------------------------------------------------
// Generalized extreme value
// ---------------------------------------------------------------------------

struct GEVParams {
  double mu = 0.0;
  double sigma = 1.0;
  double xi = 0.0;

  void validate() const;
};

struct CdfPdf {
  double cdf;
  double pdf;
};

/// Standard GEV forms; ξ = 0 is the Gumbel. Outside the support the cdf is
/// exactly 0 (ξ > 0, below the lower bound) or 1 (ξ < 0, above the upper
/// bound) and the pdf is 0.
CdfPdf gev_cdf_pdf(double x, const GEVParams& params);

/// Moments are +infinity when they do not exist (ξ ≥ 1 for the mean,
/// ξ ≥ 1/2 for the variance).
struct GevMoments {
  double mean;
  double variance;

  bool mean_finite() const;
  bool variance_finite() const;
};

GevMoments gev_moments(const GEVParams& params);

// ---------------------------------------------------------------------------
// Extreme-value (log-time) parameterization: ln T = α + σW
// ---------------------------------------------------------------------------

struct ExtremeValueParams {
  double alpha;  // -ln λ
  double sigma;  // 1/p
  double k;
};

ExtremeValueParams ev_link(const GGParams& params);
GGParams gg_from_ev(const ExtremeValueParams& ev);

/// Density of Z = ln T at z: exp(kw - e^w) / (σ Γ(k)) with w = (z - α)/σ.
double ev_log_time_density(double z, const ExtremeValueParams& ev);

// ---------------------------------------------------------------------------
// Families used by the regression models
// ---------------------------------------------------------------------------

enum class Family { Exponential, Weibull, Gamma, GeneralizedGamma, LogNormal };

/// Number of ancillary (shape/scale) parameters: 0, 1, 1, 2, 1.
int ancillary_arity(Family family);

/// Names of the log-scale ancillary parameters, e.g. {"ln_p"} for Weibull.
std::span<const std::string_view> ancillary_names(Family family);

std::string_view family_name(Family family);

/// Accepts "exponential", "weibull", "gamma", "gengamma", "lognormal".
Family parse_family(std::string_view name);

/// Baseline (reference subject) hazard terms at standardized time u > 0.
/// `log_ancillary` holds the family's ancillary parameters on log scale in
/// the order given by ancillary_names().
struct HazardTerms {
  double log_hazard;
  double cum_hazard;
};

HazardTerms baseline_terms(Family family, double u, std::span<const double> log_ancillary);

}  // namespace hazardlab
