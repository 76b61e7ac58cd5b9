#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hazardlab/data_pipeline.hpp"
#include "hazardlab/estimation.hpp"
#include "hazardlab/nonparametric.hpp"

namespace hazardlab {

enum class StratScheme { Quartiles, Custom, Single };

struct StratificationPlan {
  std::string covariate;            // a SurvivalData column
  StratScheme scheme = StratScheme::Quartiles;
  std::vector<double> breakpoints;  // Custom: strictly increasing upper bounds
  std::optional<std::string> factor;  // binary column crossed with the scheme

  void validate() const;

  static StratificationPlan quartiles(std::string covariate,
                                      std::optional<std::string> factor = std::nullopt);
  static StratificationPlan custom(std::string covariate, std::vector<double> breakpoints,
                                   std::optional<std::string> factor = std::nullopt);
  static StratificationPlan single();
};

struct StratumAssignment {
  std::vector<std::string> labels;  // stratum labels in plan order
  std::vector<int> stratum_of;      // per row, index into labels
};

/// Values equal to a breakpoint go to the lower group.
StratumAssignment assign_strata(const SurvivalData& data, const StratificationPlan& plan);

SurvivalData subset_rows(const SurvivalData& data, const std::vector<Eigen::Index>& rows);

struct StratumFit {
  std::string label;
  int n_spells = 0;
  int n_events = 0;
  std::vector<std::string> dropped;  // covariates constant within the stratum
  std::optional<FitResult> fit;      // absent when fitting threw
  std::string error;                 // why the fit is absent or unconverged
};

/// Fits `spec` independently per stratum, concurrently. Results follow the
/// plan's stratum order. Throws std::invalid_argument naming an empty stratum.
std::vector<StratumFit> stratified_fits(const ModelSpec& spec, const SurvivalData& data,
                                        const StratificationPlan& plan);
std::vector<StratumFit> stratified_fits(const ModelSpec& spec, const SpellSet& spells,
                                        const StratificationPlan& plan);

struct TimeGrid {
  double start = 0.5;
  double stop = 12.0;
  double step = 0.1;
  std::vector<double> points() const;
};

struct HazardCurve {
  std::string stratum;
  CurveSample curve;  // estimate = hazard, std_err = 0
  std::optional<HazardPeak> peak;
  std::string peak_note;  // why the peak is undefined
};

/// Predicted hazard at stratum-mean covariates over the grid, with t_star
/// inserted when a peak exists. Strata without a converged fit are skipped.
std::vector<HazardCurve> hazard_curve_family(const std::vector<StratumFit>& fits,
                                             const TimeGrid& grid = {});

struct StudyConfig {
  std::string prices_path;
  std::string recessions_path;
  std::string out_dir;
  RecessionRule rule = RecessionRule::Any;
  FitOptions options{};
  Frailty frailty = Frailty::Gamma;
  SmoothingOptions smoothing{};
  TimeGrid grid{};
  YearMonth era_split{1938, 7};
};

class StudyError : public std::runtime_error {
 public:
  StudyError(std::string stage, const std::string& what);
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct StudyBundle {
  std::vector<std::string> files;  // relative to out_dir, sorted
  nlohmann::json manifest;
};

/// Runs the full study and writes the bundle to config.out_dir.
StudyBundle run_study(const StudyConfig& config);

}  // namespace hazardlab
