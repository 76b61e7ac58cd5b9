#include "hazardlab/nonparametric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>

namespace hazardlab {

namespace {

struct EventTime {
  double time;
  int deaths;
  int at_risk;
};

// Distinct event times with death counts and risk-set sizes.
std::vector<EventTime> event_table(const SpellSet& spells, const Stratum& stratum) {
  std::map<int, std::pair<int, int>> by_time;  // duration -> (deaths, exits)
  int n = 0;
  for (const auto& s : spells.spells) {
    if (!stratum.contains(s)) continue;
    ++n;
    auto& cell = by_time[s.duration];
    cell.first += s.event;
    cell.second += 1;
  }
  if (n == 0) throw std::invalid_argument("stratum '" + stratum.label + "' is empty");
  std::vector<EventTime> out;
  int at_risk = n;
  for (const auto& [t, cell] : by_time) {
    if (cell.first > 0) out.push_back({static_cast<double>(t), cell.first, at_risk});
    at_risk -= cell.second;
  }
  return out;
}

}  // namespace

Stratum Stratum::all() { return {}; }

Stratum Stratum::recession(bool in_recession) {
  return {in_recession ? "recession" : "no recession",
          [in_recession](const SpellRecord& s) { return (s.recession != 0) == in_recession; }};
}

CurveSample kaplan_meier(const SpellSet& spells, const Stratum& stratum) {
  const auto table = event_table(spells, stratum);
  CurveSample curve{stratum.label, {{0.0, 1.0, 0.0}}};
  // S is kept as anchor * survivors / base, re-anchored whenever censoring
  // shrinks the risk set, so uncensored stretches are exact count ratios.
  double s = 1.0;
  double anchor = 1.0;
  int base = table.empty() ? 0 : table.front().at_risk;
  int expected = base;
  double greenwood = 0.0;
  for (const auto& e : table) {
    if (e.at_risk != expected) {
      anchor = s;
      base = e.at_risk;
    }
    expected = e.at_risk - e.deaths;
    s = anchor * (static_cast<double>(expected) / base);
    double se = 0.0;
    if (e.deaths < e.at_risk) {
      greenwood += static_cast<double>(e.deaths) /
                   (static_cast<double>(e.at_risk) * (e.at_risk - e.deaths));
      se = s * std::sqrt(greenwood);
    }
    if (s <= 0.0) {
      s = 0.0;
      se = 0.0;
    }
    curve.points.push_back({e.time, s, se});
  }
  return curve;
}

double step_value(const CurveSample& curve, double t) {
  double v = 1.0;
  for (const auto& p : curve.points) {
    if (p.time > t) break;
    v = p.estimate;
  }
  return v;
}

double empirical_survivor(const SpellSet& spells, double t, const Stratum& stratum) {
  int n = 0;
  int beyond = 0;
  for (const auto& s : spells.spells) {
    if (!stratum.contains(s)) continue;
    ++n;
    beyond += s.duration > t;
  }
  if (n == 0) throw std::invalid_argument("stratum '" + stratum.label + "' is empty");
  return static_cast<double>(beyond) / n;
}

CurveGap max_survivor_gap(const CurveSample& a, const CurveSample& b) {
  std::vector<double> times;
  for (const auto& p : a.points) times.push_back(p.time);
  for (const auto& p : b.points) times.push_back(p.time);
  std::sort(times.begin(), times.end());
  CurveGap best;
  for (double t : times) {
    const double g = std::abs(step_value(a, t) - step_value(b, t));
    if (g > best.gap) best = {g, t};
  }
  return best;
}

double boundary_epanechnikov(double u, double q) {
  if (q >= 1.0) return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
  if (q < 0.0) q = 0.0;
  if (u < -1.0 || u > q) return 0.0;
  const double c = 12.0 / std::pow(1.0 + q, 4);
  return c * (1.0 + u) * ((1.0 - 2.0 * q) * u + 0.5 * (3.0 * q * q - 2.0 * q + 1.0));
}

CurveSample smoothed_hazard(const SpellSet& spells, const SmoothingOptions& options,
                            const Stratum& stratum) {
  const double b = options.bandwidth;
  if (!(b > 0.0) || !std::isfinite(b)) throw std::invalid_argument("bandwidth must be positive");
  if (!(options.grid_step > 0.0)) throw std::invalid_argument("grid step must be positive");
  const auto table = event_table(spells, stratum);
  if (table.empty()) {
    throw std::invalid_argument("stratum '" + stratum.label + "' has no events");
  }
  int longest = 0;
  for (const auto& s : spells.spells) {
    if (stratum.contains(s)) longest = std::max(longest, s.duration);
  }
  constexpr double kLeft = 1.0;
  const double right = std::max(kLeft, static_cast<double>(longest));
  const int steps = static_cast<int>(std::floor((right - kLeft) / options.grid_step + 1e-9));

  CurveSample curve{stratum.label, {}};
  for (int g = 0; g <= steps; ++g) {
    const double t = kLeft + g * options.grid_step;
    const double q = (t - kLeft) / b;
    double h = 0.0;
    double var = 0.0;
    for (const auto& e : table) {
      const double w = boundary_epanechnikov((t - e.time) / b, q) / b;
      if (w == 0.0) continue;
      const double inc = static_cast<double>(e.deaths) / e.at_risk;
      h += w * inc;
      var += w * w * inc / e.at_risk;
    }
    curve.points.push_back({t, std::max(0.0, h), std::sqrt(var)});
  }
  return curve;
}

void write_curves_csv(std::ostream& out, const std::vector<CurveSample>& curves) {
  out << "time,estimate,std_err,stratum\n";
  char buf[128];
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      std::snprintf(buf, sizeof buf, "%.10g,%.17g,%.17g,", p.time, p.estimate, p.std_err);
      out << buf << c.stratum << '\n';
    }
  }
}

}  // namespace hazardlab
