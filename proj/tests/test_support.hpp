#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hazardlab/data_pipeline.hpp"
#include "hazardlab/estimation.hpp"
#include "hazardlab/simulation.hpp"

namespace hltest {

using hazardlab::SurvivalData;

/// Per-test generator seeded from HAZARDLAB_SEED (or its default) and a salt.
inline std::mt19937_64 rng(std::uint64_t salt) {
  return std::mt19937_64(hazardlab::seed_from_env() ^ (salt * 0x9E3779B97F4A7C15ULL));
}

inline double uniform(std::mt19937_64& g) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(g);
}

inline double normal(std::mt19937_64& g) { return std::normal_distribution<double>()(g); }

/// Two covariates: x1 ~ N(0, 1) and x2 ~ Bernoulli(0.4).
inline SurvivalData design(int n, std::mt19937_64& g) {
  SurvivalData d;
  d.names = {"x1", "x2"};
  d.covariates.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    d.covariates(i, 0) = normal(g);
    d.covariates(i, 1) = uniform(g) < 0.4 ? 1.0 : 0.0;
  }
  d.time.assign(n, 0.0);
  d.event.assign(n, 1);
  return d;
}

/// Applies independent exponential censoring at `rate` (none when 0).
inline void censor(SurvivalData& d, double rate, std::mt19937_64& g) {
  if (rate <= 0) return;
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    const double c = -std::log(uniform(g)) / rate;
    if (c < d.time[i]) {
      d.time[i] = c;
      d.event[i] = 0;
    }
  }
}

struct Truth {
  double b0 = 0;
  double b1 = 0;
  double b2 = 0;
  double shape = 1;  // Weibull p, or log-normal sigma
};

/// ln T = b0 + b1 x1 + b2 x2 + W/p with W standard minimum extreme value.
inline SurvivalData weibull_aft(int n, const Truth& truth, std::mt19937_64& g,
                                double censor_rate = 0) {
  SurvivalData d = design(n, g);
  for (int i = 0; i < n; ++i) {
    const double eta = truth.b0 + truth.b1 * d.covariates(i, 0) + truth.b2 * d.covariates(i, 1);
    const double w = std::log(-std::log(uniform(g)));
    d.time[i] = std::exp(eta + w / truth.shape);
  }
  censor(d, censor_rate, g);
  return d;
}

/// ln T = b0 + b1 x1 + b2 x2 + sigma Z with Z standard normal.
inline SurvivalData lognormal_aft(int n, const Truth& truth, std::mt19937_64& g) {
  SurvivalData d = design(n, g);
  for (int i = 0; i < n; ++i) {
    const double eta = truth.b0 + truth.b1 * d.covariates(i, 0) + truth.b2 * d.covariates(i, 1);
    d.time[i] = std::exp(eta + truth.shape * normal(g));
  }
  return d;
}

/// Hazard exp(b0 + b1 x1 + b2 x2), constant in time.
inline SurvivalData exponential_ph(int n, const Truth& truth, std::mt19937_64& g,
                                   double censor_rate = 0) {
  SurvivalData d = design(n, g);
  for (int i = 0; i < n; ++i) {
    const double rate =
        std::exp(truth.b0 + truth.b1 * d.covariates(i, 0) + truth.b2 * d.covariates(i, 1));
    d.time[i] = -std::log(uniform(g)) / rate;
  }
  censor(d, censor_rate, g);
  return d;
}

inline hazardlab::SpellSet spells_from(const std::vector<int>& durations,
                                       const std::vector<int>& events,
                                       const std::vector<int>& recession = {}) {
  hazardlab::SpellSet set;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    hazardlab::SpellRecord s;
    s.start = hazardlab::YearMonth::from_index(1900 * 12 + static_cast<int>(3 * i));
    s.duration = durations[i];
    s.event = events.empty() ? 1 : events[i];
    s.recession = recession.empty() ? 0 : recession[i];
    s.price_decline = 1.0 + 0.1 * static_cast<double>(i % 7);
    s.interest_rate = 4.0 + 0.05 * static_cast<double>(i % 5);
    set.spells.push_back(s);
  }
  return set;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), std::numeric_limits<double>::min());
}

/// Upper 5% critical value of chi-square with df degrees of freedom, df 1..3.
inline double chi2_crit_05(int df) {
  static const double crit[] = {3.841458820694124, 5.991464547107979, 7.814727903251178};
  return crit[df - 1];
}

}  // namespace hltest
