#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hazardlab/data_pipeline.hpp"
#include "hazardlab/estimation.hpp"

namespace hazardlab {

struct TestResult {
  std::string name;
  double statistic = 0;
  int df = 1;
  double p_value = 1;  // upper tail of the reference distribution
};

struct InformationCriteria {
  double aic = 0;
  double bic = 0;
  bool comparable = true;  // false for partial-likelihood (Cox) fits
};

InformationCriteria information_criteria(const FitResult& fit);

/// Refused with std::invalid_argument when `nested` is not a restriction of
/// `full`. Throws InconsistentFitsError when the full fit has the lower
/// log-likelihood by more than 1e-6.
TestResult lr_test(const FitResult& nested, const FitResult& full, int df);

class InconsistentFitsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// True when `nested` is a parameter restriction of `full` on the same sample.
bool is_nested(const FitResult& nested, const FitResult& full);

/// Joint test that the indexed parameters (flattened order) are zero.
TestResult wald_test(const FitResult& fit, const std::vector<Eigen::Index>& restriction);
TestResult wald_test(const FitResult& fit, const std::vector<std::string>& names);

enum class TimeTransform { Identity, KaplanMeier, Rank, Log };

std::string_view time_transform_name(TimeTransform transform);
TimeTransform parse_time_transform(std::string_view name);  // "identity", "km", "rank", "log"

struct PhTestResult {
  TestResult global;
  std::vector<TestResult> per_covariate;  // in covariate order, each on 1 df
  std::vector<double> correlations;       // scaled residual vs transformed time
};

/// Scaled-Schoenfeld slope test of proportional hazards for a Cox fit.
PhTestResult ph_assumption_test(const FitResult& cox_fit, const SurvivalData& data,
                                TimeTransform transform = TimeTransform::Identity);
PhTestResult ph_assumption_test(const FitResult& cox_fit, const SpellSet& spells,
                                TimeTransform transform = TimeTransform::Identity);

/// Sum of squared martingale-like residuals d - Λ̂(t).
double ssr_goodness(const FitResult& fit, const SurvivalData& data);
double ssr_goodness(const FitResult& fit, const SpellSet& spells);

}  // namespace hazardlab
