#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hazardlab/data_pipeline.hpp"
#include "hazardlab/estimation.hpp"
#include "hazardlab/inference.hpp"

namespace hazardlab {

enum class ResidualKind { CoxSnell, Martingale, Deviance };

std::string_view residual_kind_name(ResidualKind kind);  // "cox_snell", "martingale", "deviance"
ResidualKind parse_residual_kind(std::string_view name);

/// Residuals aligned with the data rows (spell order).
struct ResidualSet {
  ResidualKind kind = ResidualKind::CoxSnell;
  std::vector<double> values;
  std::vector<std::string> labels;  // spell start months when known
};

/// Residuals from per-spell fitted cumulative hazards r and event flags d.
/// Deviance residuals throw std::domain_error naming the spell when d - m <= 0
/// for an event spell.
ResidualSet residuals_from_cumhaz(ResidualKind kind, const std::vector<int>& event,
                                  const Eigen::VectorXd& cum_hazard,
                                  std::vector<std::string> labels = {});

ResidualSet residuals(const FitResult& fit, const SurvivalData& data, ResidualKind kind);
ResidualSet residuals(const FitResult& fit, const SpellSet& spells, ResidualKind kind);

struct ResidualSummary {
  int n = 0;
  double mean = 0;
  double median = 0;
  double max = 0;
  double min = 0;
  double std_dev = 0;               // n - 1 denominator
  std::optional<double> skewness;   // undefined for zero variance
  std::optional<double> kurtosis;   // non-excess
  double sum = 0;
  double sum_sq_dev = 0;
  std::optional<TestResult> jarque_bera;  // χ²(2)
};

/// Requires at least 8 values.
ResidualSummary residual_summary(const std::vector<double>& values);

/// Breusch-Godfrey LM test. The residuals are first purged of an intercept and
/// `regressors` by OLS; the purged series is regressed on the same columns and
/// `lags` of itself (zero before the sample). Statistic n·R² ~ χ²(lags).
TestResult bg_serial_test(const std::vector<double>& values, int lags,
                          const Eigen::MatrixXd& regressors);

struct BpgResult {
  TestResult lm;      // n·R²
  TestResult scaled;  // explained SS / (2 σ̂⁴)
};

/// Breusch-Pagan-Godfrey test on squared OLS residuals of `values` on an
/// intercept and `regressors`.
BpgResult bpg_hetero_test(const std::vector<double>& values, const Eigen::MatrixXd& regressors);

/// Covariate columns of the fit's predictors, one row per spell.
Eigen::MatrixXd fit_regressors(const FitResult& fit, const SurvivalData& data);

/// Ordered residuals paired with Φ⁻¹((i - 0.5)/n).
std::vector<std::pair<double, double>> qq_points(const std::vector<double>& values);

void write_residuals_csv(std::ostream& out, const std::vector<ResidualSet>& sets);
void write_qq_csv(std::ostream& out, const std::vector<std::pair<double, double>>& points);

}  // namespace hazardlab
