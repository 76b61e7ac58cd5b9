#include "hazardlab/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "hazardlab/special_functions.hpp"

namespace hazardlab {

namespace {

bool subset(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return std::all_of(a.begin(), a.end(), [&](const std::string& name) {
    return std::find(b.begin(), b.end(), name) != b.end();
  });
}

bool family_nested(Family a, Family b) {
  if (a == b) return true;
  if (a == Family::Exponential) {
    return b == Family::Weibull || b == Family::Gamma || b == Family::GeneralizedGamma;
  }
  return (a == Family::Weibull || a == Family::Gamma) && b == Family::GeneralizedGamma;
}

bool ph_closed(Family f) { return f == Family::Exponential || f == Family::Weibull; }

const std::vector<std::string>& ancillary_block(const ModelSpec& spec, std::size_t j) {
  static const std::vector<std::string> empty;
  return j < spec.ancillary_covariates.size() ? spec.ancillary_covariates[j] : empty;
}

void require_converged(const FitResult& fit, const char* fn) {
  if (!fit.converged) {
    throw std::invalid_argument(std::string(fn) + ": the " + fit.spec.label() +
                                " fit did not converge");
  }
}

TestResult chi_square_result(std::string name, double statistic, int df) {
  return {std::move(name), statistic, df, chi_square_sf(statistic, df)};
}

}  // namespace

InformationCriteria information_criteria(const FitResult& fit) {
  return {fit.aic(), fit.bic(), !fit.spec.is_cox()};
}

bool is_nested(const FitResult& nested, const FitResult& full) {
  const ModelSpec& a = nested.spec;
  const ModelSpec& b = full.spec;
  if (nested.n != full.n || nested.n_events != full.n_events) return false;
  if (a.is_cox() || b.is_cox()) {
    return a.is_cox() && b.is_cox() && a.options.ties == b.options.ties &&
           subset(a.covariates, b.covariates);
  }
  const Family fa = *a.family, fb = *b.family;
  if (!family_nested(fa, fb)) return false;
  if (a.metric != b.metric && !(ph_closed(fa) && ph_closed(fb))) return false;
  if (a.frailty != Frailty::None && a.frailty != b.frailty) return false;
  if (!subset(a.covariates, b.covariates)) return false;
  const auto names_a = ancillary_names(fa);
  const auto names_b = ancillary_names(fb);
  for (std::size_t j = 0; j < names_a.size(); ++j) {
    const auto& block = ancillary_block(a, j);
    if (block.empty()) continue;
    const auto it = std::find(names_b.begin(), names_b.end(), names_a[j]);
    if (it == names_b.end()) return false;
    if (!subset(block, ancillary_block(b, static_cast<std::size_t>(it - names_b.begin())))) {
      return false;
    }
  }
  return true;
}

TestResult lr_test(const FitResult& nested, const FitResult& full, int df) {
  if (df < 1) throw std::invalid_argument("lr_test: df must be positive");
  require_converged(nested, "lr_test");
  require_converged(full, "lr_test");
  if (!is_nested(nested, full)) {
    throw std::invalid_argument("lr_test: " + nested.spec.label() + " is not nested in " +
                                full.spec.label() +
                                "; the LR test cannot compare non-nested models");
  }
  const double diff = full.loglik - nested.loglik;
  if (diff < -1e-6) {
    throw InconsistentFitsError("lr_test: the full model's log-likelihood (" +
                                std::to_string(full.loglik) + ") is below the nested model's (" +
                                std::to_string(nested.loglik) + ")");
  }
  return chi_square_result("LR " + nested.spec.label() + " vs " + full.spec.label(),
                           std::max(0.0, 2.0 * diff), df);
}

TestResult wald_test(const FitResult& fit, const std::vector<Eigen::Index>& restriction) {
  require_converged(fit, "wald_test");
  if (fit.spec.options.robust && !fit.cov_robust) {
    throw std::invalid_argument("wald_test: robust covariance requested but not computed");
  }
  if (restriction.empty()) throw std::invalid_argument("wald_test: empty restriction");
  const Eigen::VectorXd theta = fit.estimates();
  const Eigen::MatrixXd& cov = fit.covariance();
  const auto k = static_cast<Eigen::Index>(restriction.size());
  Eigen::VectorXd b(k);
  Eigen::MatrixXd v(k, k);
  std::string label;
  for (Eigen::Index r = 0; r < k; ++r) {
    const Eigen::Index i = restriction[r];
    if (i < 0 || i >= theta.size()) throw std::out_of_range("wald_test: parameter index out of range");
    b(r) = theta(i);
    for (Eigen::Index c = 0; c < k; ++c) v(r, c) = cov(i, restriction[c]);
    label += (r ? "," : "") + fit.names[i];
  }
  if (!v.allFinite()) {
    throw std::domain_error("wald_test: restricted covariance is undefined (" + label + ")");
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(v);
  const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (!(eig.eigenvalues().minCoeff() > 1e-14 * top)) {
    throw std::domain_error("wald_test: restricted covariance is singular (" + label + ")");
  }
  const Eigen::VectorXd w = eig.eigenvectors().transpose() * b;
  const double stat = (w.array().square() / eig.eigenvalues().array()).sum();
  return chi_square_result("Wald " + label + " = 0", stat, static_cast<int>(k));
}

TestResult wald_test(const FitResult& fit, const std::vector<std::string>& names) {
  std::vector<Eigen::Index> idx;
  for (const auto& name : names) {
    const auto it = std::find(fit.names.begin(), fit.names.end(), name);
    if (it == fit.names.end()) throw std::invalid_argument("wald_test: unknown parameter '" + name + "'");
    idx.push_back(it - fit.names.begin());
  }
  return wald_test(fit, idx);
}

std::string_view time_transform_name(TimeTransform transform) {
  switch (transform) {
    case TimeTransform::Identity: return "identity";
    case TimeTransform::KaplanMeier: return "km";
    case TimeTransform::Rank: return "rank";
    case TimeTransform::Log: return "log";
  }
  return "identity";
}

TimeTransform parse_time_transform(std::string_view name) {
  for (auto t : {TimeTransform::Identity, TimeTransform::KaplanMeier, TimeTransform::Rank,
                 TimeTransform::Log}) {
    if (time_transform_name(t) == name) return t;
  }
  throw std::invalid_argument("unknown time transform '" + std::string(name) + "'");
}

namespace {

// Transformed death times, one per death, in the order of `times`.
std::vector<double> transform_times(const std::vector<double>& times, const SurvivalData& data,
                                    TimeTransform transform) {
  std::vector<double> out(times.size());
  switch (transform) {
    case TimeTransform::Identity: out = times; break;
    case TimeTransform::Log:
      std::transform(times.begin(), times.end(), out.begin(), [](double t) { return std::log(t); });
      break;
    case TimeTransform::Rank: {
      std::vector<std::size_t> order(times.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
      for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && times[order[j]] == times[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t m = i; m < j; ++m) out[order[m]] = mid;
        i = j;
      }
      break;
    }
    case TimeTransform::KaplanMeier: {
      // 1 - S(t-) with S the overall Kaplan-Meier estimate.
      std::map<double, std::pair<int, int>> table;  // time -> (deaths, exits)
      for (Eigen::Index i = 0; i < data.n(); ++i) {
        auto& cell = table[data.time[i]];
        cell.first += data.event[i];
        cell.second += 1;
      }
      std::map<double, double> before;
      double s = 1.0;
      int at_risk = static_cast<int>(data.n());
      for (const auto& [t, cell] : table) {
        before[t] = s;
        if (cell.first > 0) s *= 1.0 - static_cast<double>(cell.first) / at_risk;
        at_risk -= cell.second;
      }
      for (std::size_t i = 0; i < times.size(); ++i) out[i] = 1.0 - before.at(times[i]);
      break;
    }
  }
  return out;
}

}  // namespace

PhTestResult ph_assumption_test(const FitResult& cox_fit, const SurvivalData& data,
                                TimeTransform transform) {
  if (!cox_fit.spec.is_cox()) {
    throw std::invalid_argument("ph_assumption_test: Schoenfeld residuals need a Cox fit");
  }
  require_converged(cox_fit, "ph_assumption_test");
  const auto p = static_cast<Eigen::Index>(cox_fit.spec.covariates.size());
  const SchoenfeldResiduals sr = schoenfeld_residuals(cox_fit, data);
  const auto d = static_cast<Eigen::Index>(sr.times.size());
  if (d <= p) {
    throw std::invalid_argument("ph_assumption_test: " + std::to_string(d) +
                                " events are too few for " + std::to_string(p) + " covariates");
  }
  const std::vector<double> g = transform_times(sr.times, data, transform);
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(g.data(), d);
  x.array() -= x.mean();
  const double sxx = x.squaredNorm();
  if (!(sxx > 0.0)) throw std::domain_error("ph_assumption_test: all event times coincide");

  const Eigen::MatrixXd& var = cox_fit.cov_model;
  const auto dd = static_cast<double>(d);
  const Eigen::MatrixXd scaled = (sr.values * var) * dd;  // plus beta, which x is orthogonal to
  const Eigen::RowVectorXd u = x.transpose() * scaled;
  const Eigen::RowVectorXd raw = x.transpose() * sr.values;

  PhTestResult out;
  const double global = (raw * var * raw.transpose())(0, 0) * dd / sxx;
  out.global = chi_square_result("PH global", global, static_cast<int>(p));
  for (Eigen::Index j = 0; j < p; ++j) {
    const double z = u(j) * u(j) / (var(j, j) * dd * sxx);
    out.per_covariate.push_back(chi_square_result("PH " + cox_fit.spec.covariates[j], z, 1));
    const Eigen::VectorXd col = scaled.col(j).array() - scaled.col(j).mean();
    const double denom = std::sqrt(sxx * col.squaredNorm());
    out.correlations.push_back(denom > 0.0 ? x.dot(col) / denom : 0.0);
  }
  return out;
}

PhTestResult ph_assumption_test(const FitResult& cox_fit, const SpellSet& spells,
                                TimeTransform transform) {
  return ph_assumption_test(cox_fit, SurvivalData::from_spells(spells), transform);
}

double ssr_goodness(const FitResult& fit, const SurvivalData& data) {
  const Eigen::VectorXd r = fitted_cumulative_hazard(fit, data);
  double ssr = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double m = data.event[i] - r(i);
    ssr += m * m;
  }
  return ssr;
}

double ssr_goodness(const FitResult& fit, const SpellSet& spells) {
  return ssr_goodness(fit, SurvivalData::from_spells(spells));
}

}  // namespace hazardlab
