#include "hazardlab/distributions.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "hazardlab/special_functions.hpp"

namespace hazardlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEulerGamma = 0.57721566490153286061;

void require_positive_time(double t, const char* fn) {
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw std::domain_error(std::string(fn) + ": time must be positive and finite, got " +
                            std::to_string(t));
  }
}

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

void GGParams::validate() const {
  if (!positive_finite(lambda) || !positive_finite(p) || !positive_finite(k)) {
    throw std::domain_error("GGParams: lambda, p and k must be positive and finite");
  }
}

double gg_log_density(double t, const GGParams& params) {
  params.validate();
  require_positive_time(t, "gg_density");
  const double log_lt = std::log(params.lambda * t);
  return std::log(params.lambda * params.p) + (params.p * params.k - 1.0) * log_lt -
         std::exp(params.p * log_lt) - ln_gamma(params.k);
}

double gg_density(double t, const GGParams& params) { return std::exp(gg_log_density(t, params)); }

double gg_log_survivor(double t, const GGParams& params) {
  params.validate();
  if (std::isnan(t) || t < 0.0) {
    throw std::domain_error("gg_survivor: time must be non-negative, got " + std::to_string(t));
  }
  if (t == 0.0) return 0.0;
  const double x = std::exp(params.p * std::log(params.lambda * t));
  return log_reg_upper_incomplete_gamma(params.k, x);
}

double gg_survivor(double t, const GGParams& params) {
  params.validate();
  if (std::isnan(t) || t < 0.0) {
    throw std::domain_error("gg_survivor: time must be non-negative, got " + std::to_string(t));
  }
  if (t == 0.0) return 1.0;
  const double x = std::exp(params.p * std::log(params.lambda * t));
  return reg_upper_incomplete_gamma(params.k, x);
}

double gg_hazard(double t, const GGParams& params) {
  const double log_f = gg_log_density(t, params);
  const double log_s = gg_log_survivor(t, params);
  if (std::isinf(log_s)) {
    throw std::domain_error("gg_hazard: survivor is exactly zero at t = " + std::to_string(t));
  }
  return std::exp(log_f - log_s);
}

double gg_cumulative_hazard(double t, const GGParams& params) {
  return -gg_log_survivor(t, params);
}

double gg_moment(int r, const GGParams& params) {
  params.validate();
  if (r < 1) throw std::domain_error("gg_moment: order must be a positive integer");
  const double shifted = params.k + r / params.p;
  const double log_m =
      -r * std::log(params.lambda) + ln_gamma(shifted) - ln_gamma(params.k);
  if (log_m > std::log(std::numeric_limits<double>::max())) {
    throw std::overflow_error("gg_moment: moment of order " + std::to_string(r) +
                              " overflows (ln value " + std::to_string(log_m) + ")");
  }
  return std::exp(log_m);
}

double gg_mean(const GGParams& params) { return gg_moment(1, params); }

double gg_variance(const GGParams& params) {
  params.validate();
  const double lg1 = ln_gamma(params.k + 1.0 / params.p);
  const double lg2 = ln_gamma(params.k + 2.0 / params.p);
  const double lg0 = ln_gamma(params.k);
  const double mean = gg_mean(params);
  // E(T^2) - E(T)^2 = E(T)^2 * (Γ(k+2/p)Γ(k)/Γ(k+1/p)^2 - 1)
  return mean * mean * std::expm1(lg2 + lg0 - 2.0 * lg1);
}

void LogNormalParams::validate() const {
  if (!std::isfinite(mu) || !positive_finite(sigma)) {
    throw std::domain_error("LogNormalParams: mu must be finite and sigma positive");
  }
}

SurvivalTriple lognormal_sfh(double t, const LogNormalParams& params) {
  params.validate();
  require_positive_time(t, "lognormal_sfh");
  const double z = (std::log(t) - params.mu) / params.sigma;
  const double log_f =
      -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(t * params.sigma);
  const double log_s = std_normal_log_sf(z);
  return {std::exp(log_s), std::exp(log_f), std::exp(log_f - log_s)};
}

void GEVParams::validate() const {
  if (!std::isfinite(mu) || !positive_finite(sigma) || !std::isfinite(xi)) {
    throw std::domain_error("GEVParams: mu and xi must be finite and sigma positive");
  }
}

CdfPdf gev_cdf_pdf(double x, const GEVParams& params) {
  params.validate();
  if (std::isnan(x)) throw std::domain_error("gev_cdf_pdf: NaN argument");
  const double s = (x - params.mu) / params.sigma;
  if (params.xi == 0.0) {
    const double e = std::exp(-s);
    const double cdf = std::exp(-e);
    return {cdf, e * cdf / params.sigma};
  }
  const double y = 1.0 + params.xi * s;
  if (y <= 0.0) return {params.xi > 0.0 ? 0.0 : 1.0, 0.0};
  const double log_y = std::log1p(params.xi * s);
  const double tx = std::exp(-log_y / params.xi);
  const double cdf = std::exp(-tx);
  const double pdf = std::exp((-1.0 / params.xi - 1.0) * log_y - tx) / params.sigma;
  return {cdf, pdf};
}

bool GevMoments::mean_finite() const { return std::isfinite(mean); }
bool GevMoments::variance_finite() const { return std::isfinite(variance); }

GevMoments gev_moments(const GEVParams& params) {
  params.validate();
  const double xi = params.xi;
  if (xi == 0.0) {
    const double sd = params.sigma * std::numbers::pi / std::sqrt(6.0);
    return {params.mu + params.sigma * kEulerGamma, sd * sd};
  }
  GevMoments m{kInf, kInf};
  if (xi < 1.0) {
    const double g1 = std::exp(ln_gamma(1.0 - xi));
    m.mean = params.mu + params.sigma / xi * (g1 - 1.0);
    if (xi < 0.5) {
      const double g2 = std::exp(ln_gamma(1.0 - 2.0 * xi));
      const double scale = params.sigma / xi;
      m.variance = scale * scale * (g2 - g1 * g1);
    }
  }
  return m;
}

ExtremeValueParams ev_link(const GGParams& params) {
  params.validate();
  return {-std::log(params.lambda), 1.0 / params.p, params.k};
}

GGParams gg_from_ev(const ExtremeValueParams& ev) {
  GGParams params{std::exp(-ev.alpha), 1.0 / ev.sigma, ev.k};
  params.validate();
  return params;
}

double ev_log_time_density(double z, const ExtremeValueParams& ev) {
  if (!positive_finite(ev.sigma) || !positive_finite(ev.k)) {
    throw std::domain_error("ev_log_time_density: sigma and k must be positive");
  }
  const double w = (z - ev.alpha) / ev.sigma;
  return std::exp(ev.k * w - std::exp(w) - ln_gamma(ev.k)) / ev.sigma;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<std::string_view, 0> kNoAncillary{};
constexpr std::array<std::string_view, 1> kWeibullAncillary{"ln_p"};
constexpr std::array<std::string_view, 1> kGammaAncillary{"ln_k"};
constexpr std::array<std::string_view, 2> kGenGammaAncillary{"ln_p", "ln_k"};
constexpr std::array<std::string_view, 1> kLogNormalAncillary{"ln_sigma"};

}  // namespace

int ancillary_arity(Family family) {
  return static_cast<int>(ancillary_names(family).size());
}

std::span<const std::string_view> ancillary_names(Family family) {
  switch (family) {
    case Family::Exponential: return kNoAncillary;
    case Family::Weibull: return kWeibullAncillary;
    case Family::Gamma: return kGammaAncillary;
    case Family::GeneralizedGamma: return kGenGammaAncillary;
    case Family::LogNormal: return kLogNormalAncillary;
  }
  throw std::logic_error("unknown family");
}

std::string_view family_name(Family family) {
  switch (family) {
    case Family::Exponential: return "exponential";
    case Family::Weibull: return "weibull";
    case Family::Gamma: return "gamma";
    case Family::GeneralizedGamma: return "gengamma";
    case Family::LogNormal: return "lognormal";
  }
  throw std::logic_error("unknown family");
}

Family parse_family(std::string_view name) {
  for (Family f : {Family::Exponential, Family::Weibull, Family::Gamma,
                   Family::GeneralizedGamma, Family::LogNormal}) {
    if (family_name(f) == name) return f;
  }
  throw std::invalid_argument("unknown distribution family '" + std::string(name) + "'");
}

HazardTerms baseline_terms(Family family, double u, std::span<const double> log_ancillary) {
  if (static_cast<int>(log_ancillary.size()) != ancillary_arity(family)) {
    throw std::invalid_argument("baseline_terms: wrong number of ancillary parameters");
  }
  if (!(u > 0.0) || !std::isfinite(u)) {
    return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  }
  const double log_u = std::log(u);
  switch (family) {
    case Family::Exponential:
      return {0.0, u};
    case Family::Weibull: {
      const double p = std::exp(log_ancillary[0]);
      return {log_ancillary[0] + (p - 1.0) * log_u, std::exp(p * log_u)};
    }
    case Family::Gamma: {
      const double k = std::exp(log_ancillary[0]);
      const double log_s = log_reg_upper_incomplete_gamma(k, u);
      const double log_f = (k - 1.0) * log_u - u - ln_gamma(k);
      return {log_f - log_s, -log_s};
    }
    case Family::GeneralizedGamma: {
      const double p = std::exp(log_ancillary[0]);
      const double k = std::exp(log_ancillary[1]);
      const double x = std::exp(p * log_u);
      const double log_s = log_reg_upper_incomplete_gamma(k, x);
      const double log_f = log_ancillary[0] + (p * k - 1.0) * log_u - x - ln_gamma(k);
      return {log_f - log_s, -log_s};
    }
    case Family::LogNormal: {
      const double sigma = std::exp(log_ancillary[0]);
      const double z = log_u / sigma;
      const double log_s = std_normal_log_sf(z);
      const double log_f = -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi) - log_u -
                           log_ancillary[0];
      return {log_f - log_s, -log_s};
    }
  }
  throw std::logic_error("unknown family");
}

}  // namespace hazardlab
