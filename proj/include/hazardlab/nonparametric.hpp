#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hazardlab/data_pipeline.hpp"

namespace hazardlab {

struct CurvePoint {
  double time = 0;
  double estimate = 0;
  double std_err = 0;
};

/// Tabulated curve with strictly increasing times.
struct CurveSample {
  std::string stratum;
  std::vector<CurvePoint> points;
};

/// Optional filter selecting the spells of one stratum.
struct Stratum {
  std::string label = "all";
  std::function<bool(const SpellRecord&)> member;

  bool contains(const SpellRecord& s) const { return !member || member(s); }

  static Stratum all();
  static Stratum recession(bool in_recession);
};

/// Product-limit estimate with Greenwood standard errors. The first point is
/// (0, 1, 0); then one point per distinct event time.
CurveSample kaplan_meier(const SpellSet& spells, const Stratum& stratum = Stratum::all());

/// Right-continuous step evaluation of a survivor curve.
double step_value(const CurveSample& curve, double t);

/// #{t_i > t} / n over the stratum, ignoring censoring.
double empirical_survivor(const SpellSet& spells, double t, const Stratum& stratum = Stratum::all());

/// Largest |S_a(t) - S_b(t)| over the union of jump times, and where it occurs.
struct CurveGap {
  double gap = 0;
  double time = 0;
};
CurveGap max_survivor_gap(const CurveSample& a, const CurveSample& b);

struct SmoothingOptions {
  double bandwidth = 1.5;
  double grid_step = 0.1;
};

/// Epanechnikov-smoothed Nelson-Aalen hazard on a uniform grid over
/// [1, longest duration], with a boundary kernel near t = 1.
CurveSample smoothed_hazard(const SpellSet& spells, const SmoothingOptions& options = {},
                            const Stratum& stratum = Stratum::all());

/// Kernel weight K_q(u) with support [-1, q]; q >= 1 is the plain Epanechnikov.
double boundary_epanechnikov(double u, double q);

void write_curves_csv(std::ostream& out, const std::vector<CurveSample>& curves);

}  // namespace hazardlab
