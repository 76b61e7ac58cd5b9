#include "hazardlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "hazardlab/special_functions.hpp"

namespace hazardlab {

namespace {

struct OlsFit {
  Eigen::VectorXd residuals;
  double r_squared = 0;
  double explained_ss = 0;
};

// OLS of y on X (X already holds the intercept column).
OlsFit ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const char* fn) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols()) {
    throw std::domain_error(std::string(fn) + ": auxiliary regressors are rank deficient");
  }
  const Eigen::VectorXd b = qr.solve(y);
  OlsFit fit;
  const Eigen::VectorXd fitted = X * b;
  fit.residuals = y - fitted;
  const double ybar = y.mean();
  const double tss = (y.array() - ybar).square().sum();
  fit.explained_ss = (fitted.array() - ybar).square().sum();
  fit.r_squared = tss > 0.0 ? 1.0 - fit.residuals.squaredNorm() / tss : 0.0;
  return fit;
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& regressors, Eigen::Index n) {
  if (regressors.size() > 0 && regressors.rows() != n) {
    throw std::invalid_argument("regressor rows do not match the residual count");
  }
  Eigen::MatrixXd X(n, 1 + regressors.cols());
  X.col(0).setOnes();
  if (regressors.cols() > 0) X.rightCols(regressors.cols()) = regressors;
  return X;
}

Eigen::VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string_view residual_kind_name(ResidualKind kind) {
  switch (kind) {
    case ResidualKind::CoxSnell: return "cox_snell";
    case ResidualKind::Martingale: return "martingale";
    case ResidualKind::Deviance: return "deviance";
  }
  return "cox_snell";
}

ResidualKind parse_residual_kind(std::string_view name) {
  for (auto k : {ResidualKind::CoxSnell, ResidualKind::Martingale, ResidualKind::Deviance}) {
    if (residual_kind_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown residual kind '" + std::string(name) + "'");
}

ResidualSet residuals_from_cumhaz(ResidualKind kind, const std::vector<int>& event,
                                  const Eigen::VectorXd& cum_hazard,
                                  std::vector<std::string> labels) {
  const auto n = static_cast<Eigen::Index>(event.size());
  if (cum_hazard.size() != n) throw std::invalid_argument("event and hazard lengths differ");
  ResidualSet out{kind, std::vector<double>(event.size()), std::move(labels)};
  auto spell_name = [&](Eigen::Index i) {
    return i < static_cast<Eigen::Index>(out.labels.size()) ? out.labels[i]
                                                            : "#" + std::to_string(i);
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = cum_hazard(i);
    const double m = event[i] - r;
    switch (kind) {
      case ResidualKind::CoxSnell: out.values[i] = r; break;
      case ResidualKind::Martingale: out.values[i] = m; break;
      case ResidualKind::Deviance: {
        double inner = m;
        if (event[i]) {
          const double dm = event[i] - m;
          if (!(dm > 0.0)) {
            throw std::domain_error("deviance residual undefined for spell " + spell_name(i) +
                                    ": d - m = " + std::to_string(dm));
          }
          inner += event[i] * std::log(dm);
        }
        const double dev = std::sqrt(std::max(0.0, -2.0 * inner));
        out.values[i] = m < 0.0 ? -dev : dev;
        break;
      }
    }
  }
  return out;
}

ResidualSet residuals(const FitResult& fit, const SurvivalData& data, ResidualKind kind) {
  return residuals_from_cumhaz(kind, data.event, fitted_cumulative_hazard(fit, data), data.labels);
}

ResidualSet residuals(const FitResult& fit, const SpellSet& spells, ResidualKind kind) {
  return residuals(fit, SurvivalData::from_spells(spells), kind);
}

ResidualSummary residual_summary(const std::vector<double>& values) {
  if (values.size() < 8) throw std::invalid_argument("residual_summary: need at least 8 values");
  ResidualSummary s;
  s.n = static_cast<int>(values.size());
  const double n = s.n;
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  const std::size_t h = sorted.size() / 2;
  s.median = sorted.size() % 2 ? sorted[h] : 0.5 * (sorted[h - 1] + sorted[h]);
  for (double v : values) s.sum += v;
  s.mean = s.min == s.max ? s.min : s.sum / n;
  double m2 = 0, m3 = 0, m4 = 0;
  for (double v : values) {
    const double d = v - s.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  s.sum_sq_dev = m2;
  s.std_dev = std::sqrt(m2 / (n - 1.0));
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (m2 > 1e-300 && m2 > 1e-24 * s.mean * s.mean) {
    const double skew = m3 / std::pow(m2, 1.5);
    const double kurt = m4 / (m2 * m2);
    s.skewness = skew;
    s.kurtosis = kurt;
    const double jb = n / 6.0 * (skew * skew + 0.25 * (kurt - 3.0) * (kurt - 3.0));
    s.jarque_bera = TestResult{"Jarque-Bera", jb, 2, chi_square_sf(jb, 2)};
  }
  return s;
}

TestResult bg_serial_test(const std::vector<double>& values, int lags,
                          const Eigen::MatrixXd& regressors) {
  if (lags < 1) throw std::invalid_argument("bg_serial_test: lags must be positive");
  const auto n = static_cast<Eigen::Index>(values.size());
  const Eigen::MatrixXd X = with_intercept(regressors, n);
  if (n <= lags + X.cols()) throw std::invalid_argument("bg_serial_test: too few observations");
  const Eigen::VectorXd e = ols(as_vector(values), X, "bg_serial_test").residuals;
  Eigen::MatrixXd A(n, X.cols() + lags);
  A.leftCols(X.cols()) = X;
  for (int l = 1; l <= lags; ++l) {
    auto col = A.col(X.cols() + l - 1);
    col.setZero();
    col.tail(n - l) = e.head(n - l);
  }
  const double stat = static_cast<double>(n) * ols(e, A, "bg_serial_test").r_squared;
  return {"Breusch-Godfrey LM", stat, lags, chi_square_sf(stat, lags)};
}

BpgResult bpg_hetero_test(const std::vector<double>& values, const Eigen::MatrixXd& regressors) {
  const auto n = static_cast<Eigen::Index>(values.size());
  const Eigen::MatrixXd X = with_intercept(regressors, n);
  if (X.cols() < 2) throw std::invalid_argument("bpg_hetero_test: at least one regressor needed");
  if (n <= X.cols()) throw std::invalid_argument("bpg_hetero_test: too few observations");
  const Eigen::VectorXd e = ols(as_vector(values), X, "bpg_hetero_test").residuals;
  const Eigen::VectorXd e2 = e.array().square();
  const OlsFit aux = ols(e2, X, "bpg_hetero_test");
  const int df = static_cast<int>(X.cols() - 1);
  const double lm = static_cast<double>(n) * aux.r_squared;
  const double sigma2 = e2.sum() / static_cast<double>(n);
  const double scaled = aux.explained_ss / (2.0 * sigma2 * sigma2);
  return {{"Breusch-Pagan-Godfrey LM", lm, df, chi_square_sf(lm, df)},
          {"Breusch-Pagan-Godfrey scaled explained SS", scaled, df, chi_square_sf(scaled, df)}};
}

Eigen::MatrixXd fit_regressors(const FitResult& fit, const SurvivalData& data) {
  const auto names = fit.predictor_names();
  Eigen::MatrixXd out(data.n(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t c = 0; c < names.size(); ++c) {
    out.col(static_cast<Eigen::Index>(c)) = data.covariates.col(data.column(names[c]));
  }
  return out;
}

std::vector<std::pair<double, double>> qq_points(const std::vector<double>& values) {
  if (values.size() < 2) throw std::invalid_argument("qq_points: need at least 2 values");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::vector<std::pair<double, double>> out;
  out.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    out.emplace_back(std_normal_quantile((static_cast<double>(i) + 0.5) / n), sorted[i]);
  }
  return out;
}

void write_residuals_csv(std::ostream& out, const std::vector<ResidualSet>& sets) {
  out << "spell_start,kind,value\n";
  char buf[64];
  for (const auto& set : sets) {
    for (std::size_t i = 0; i < set.values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", set.values[i]);
      out << (i < set.labels.size() ? set.labels[i] : std::to_string(i)) << ','
          << residual_kind_name(set.kind) << ',' << buf << '\n';
    }
  }
}

void write_qq_csv(std::ostream& out, const std::vector<std::pair<double, double>>& points) {
  out << "theoretical,empirical\n";
  char buf[96];
  for (const auto& [q, v] : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", q, v);
    out << buf;
  }
}

}  // namespace hazardlab
