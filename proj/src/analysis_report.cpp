#include "hazardlab/analysis_report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include "hazardlab/diagnostics.hpp"
#include "hazardlab/inference.hpp"
#include "hazardlab/serialization.hpp"
#include "hazardlab/special_functions.hpp"

namespace hazardlab {

// --- stratification ----------------------------------------------------------

void StratificationPlan::validate() const {
  if (scheme != StratScheme::Single && covariate.empty()) {
    throw std::invalid_argument("stratification plan needs a covariate");
  }
  if (scheme == StratScheme::Custom) {
    if (breakpoints.empty()) throw std::invalid_argument("custom scheme needs breakpoints");
    for (std::size_t i = 0; i < breakpoints.size(); ++i) {
      if (!std::isfinite(breakpoints[i]) || (i > 0 && !(breakpoints[i] > breakpoints[i - 1]))) {
        throw std::invalid_argument("breakpoints must be finite and strictly increasing");
      }
    }
  }
  if (factor && factor->empty()) throw std::invalid_argument("empty factor name");
}

StratificationPlan StratificationPlan::quartiles(std::string covariate,
                                                 std::optional<std::string> factor) {
  return {std::move(covariate), StratScheme::Quartiles, {}, std::move(factor)};
}

StratificationPlan StratificationPlan::custom(std::string covariate, std::vector<double> breakpoints,
                                              std::optional<std::string> factor) {
  return {std::move(covariate), StratScheme::Custom, std::move(breakpoints), std::move(factor)};
}

StratificationPlan StratificationPlan::single() { return {"", StratScheme::Single, {}, {}}; }

StratumAssignment assign_strata(const SurvivalData& data, const StratificationPlan& plan) {
  plan.validate();
  const auto n = data.n();
  std::vector<std::string> base;
  std::vector<int> group(static_cast<std::size_t>(n), 0);
  if (plan.scheme == StratScheme::Single) {
    base.push_back("all");
  } else {
    const Eigen::Index col = data.column(plan.covariate);
    std::vector<double> bp;
    std::string tag;
    if (plan.scheme == StratScheme::Quartiles) {
      std::vector<double> values(data.covariates.col(col).data(),
                                 data.covariates.col(col).data() + n);
      const auto q = quartile_breakpoints(values);
      bp.assign(q.begin(), q.end());
      tag = " Q";
    } else {
      bp = plan.breakpoints;
      tag = " G";
    }
    for (std::size_t g = 0; g <= bp.size(); ++g) base.push_back(plan.covariate + tag + std::to_string(g + 1));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = data.covariates(i, col);
      group[i] = static_cast<int>(std::lower_bound(bp.begin(), bp.end(), v) - bp.begin());
    }
  }
  StratumAssignment out;
  out.stratum_of.resize(static_cast<std::size_t>(n));
  if (!plan.factor) {
    out.labels = base;
    out.stratum_of = group;
    return out;
  }
  const Eigen::Index fcol = data.column(*plan.factor);
  for (const auto& b : base) {
    const std::string prefix = plan.scheme == StratScheme::Single ? "" : b + " / ";
    out.labels.push_back(prefix + *plan.factor);
    out.labels.push_back(prefix + "no " + *plan.factor);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double f = data.covariates(i, fcol);
    if (f != 0.0 && f != 1.0) {
      throw std::invalid_argument("factor '" + *plan.factor + "' is not binary");
    }
    out.stratum_of[i] = 2 * group[i] + (f == 1.0 ? 0 : 1);
  }
  return out;
}

SurvivalData subset_rows(const SurvivalData& data, const std::vector<Eigen::Index>& rows) {
  SurvivalData out;
  out.names = data.names;
  out.covariates.resize(static_cast<Eigen::Index>(rows.size()), data.covariates.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Eigen::Index i = rows[r];
    out.time.push_back(data.time[i]);
    out.event.push_back(data.event[i]);
    out.covariates.row(static_cast<Eigen::Index>(r)) = data.covariates.row(i);
    if (i < static_cast<Eigen::Index>(data.labels.size())) out.labels.push_back(data.labels[i]);
  }
  return out;
}

namespace {

bool constant_column(const SurvivalData& data, const std::string& name) {
  const auto col = data.covariates.col(data.column(name));
  return col.size() == 0 || (col.array() == col(0)).all();
}

StratumFit fit_stratum(const ModelSpec& spec, SurvivalData data, std::string label) {
  StratumFit out;
  out.label = std::move(label);
  out.n_spells = static_cast<int>(data.n());
  out.n_events = data.events();
  ModelSpec local = spec;
  auto prune = [&](std::vector<std::string>& names) {
    std::erase_if(names, [&](const std::string& c) {
      if (!constant_column(data, c)) return false;
      if (std::find(out.dropped.begin(), out.dropped.end(), c) == out.dropped.end()) {
        out.dropped.push_back(c);
      }
      return true;
    });
  };
  prune(local.covariates);
  for (auto& block : local.ancillary_covariates) prune(block);
  try {
    if (local.is_cox() && local.covariates.empty()) {
      throw std::invalid_argument("no covariate varies within the stratum");
    }
    const int k = parameter_count(local);
    if (out.n_events < 2 * k) {
      throw std::invalid_argument(std::to_string(out.n_events) + " events are too few for " +
                                  std::to_string(k) + " parameters");
    }
    FitResult fit = local.is_cox() ? fit_cox(data, local.covariates, local.options.ties, local.options)
                                   : fit_mle(local, data);
    if (!fit.converged) out.error = fit.message;
    out.fit = std::move(fit);
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

std::vector<StratumFit> stratified_fits(const ModelSpec& spec, const SurvivalData& data,
                                        const StratificationPlan& plan) {
  spec.validate();
  const StratumAssignment a = assign_strata(data, plan);
  std::vector<std::vector<Eigen::Index>> rows(a.labels.size());
  for (Eigen::Index i = 0; i < data.n(); ++i) rows[a.stratum_of[i]].push_back(i);
  for (std::size_t s = 0; s < rows.size(); ++s) {
    if (rows[s].empty()) throw std::invalid_argument("stratum '" + a.labels[s] + "' is empty");
  }
  std::vector<std::future<StratumFit>> jobs;
  for (std::size_t s = 0; s < rows.size(); ++s) {
    jobs.push_back(std::async(std::launch::async, fit_stratum, std::cref(spec),
                              subset_rows(data, rows[s]), a.labels[s]));
  }
  std::vector<StratumFit> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

std::vector<StratumFit> stratified_fits(const ModelSpec& spec, const SpellSet& spells,
                                        const StratificationPlan& plan) {
  return stratified_fits(spec, SurvivalData::from_spells(spells), plan);
}

std::vector<double> TimeGrid::points() const {
  if (!(step > 0.0) || !(stop >= start) || !(start > 0.0)) {
    throw std::invalid_argument("time grid needs 0 < start <= stop and a positive step");
  }
  std::vector<double> out;
  const int steps = static_cast<int>(std::floor((stop - start) / step + 1e-9));
  for (int i = 0; i <= steps; ++i) out.push_back(start + i * step);
  return out;
}

std::vector<HazardCurve> hazard_curve_family(const std::vector<StratumFit>& fits,
                                             const TimeGrid& grid) {
  const std::vector<double> base = grid.points();
  std::vector<HazardCurve> out;
  for (const auto& sf : fits) {
    if (!sf.fit || !sf.fit->converged || sf.fit->spec.is_cox()) continue;
    const FitResult& fit = *sf.fit;
    HazardCurve hc;
    hc.stratum = sf.label;
    hc.curve.stratum = sf.label;
    std::vector<double> times = base;
    try {
      hc.peak = hazard_peak(fit, fit.covariate_means);
      times.push_back(hc.peak->t_star);
      std::sort(times.begin(), times.end());
    } catch (const std::domain_error& e) {
      hc.peak_note = e.what();
    }
    for (double t : times) {
      double h = predict(fit, fit.covariate_means, t, PredictKind::Hazard);
      if (hc.peak && t == hc.peak->t_star) h = hc.peak->h_star;
      hc.curve.points.push_back({t, h, 0.0});
    }
    out.push_back(std::move(hc));
  }
  return out;
}

// --- study -------------------------------------------------------------------

StudyError::StudyError(std::string stage, const std::string& what)
    : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}

namespace {

std::string g6(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string g6(const std::optional<double>& v) { return v ? g6(*v) : "NA"; }

std::string csv_text(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::string file_tag(const std::string& label) {
  std::string s = label;
  for (char& c : s) {
    if (c == '/' || c == ' ') c = '_';
  }
  return s;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StudyError&) {
    throw;
  } catch (const std::exception& e) {
    throw StudyError(name, e.what());
  }
}

struct Bundle {
  std::map<std::string, std::string> files;  // name -> content
  void add(const std::string& name, std::string content) { files[name] = std::move(content); }
};

struct ResidualBattery {
  ResidualSummary summary;
  TestResult bg;
  BpgResult bpg;
};

struct ModelEntry {
  std::string label;
  std::optional<FitResult> fit;  // absent when estimation threw
  std::string error;
};

template <class F>
ModelEntry guarded_fit(std::string label, F&& f) {
  try {
    FitResult fit = f();
    return {std::move(label), std::move(fit), ""};
  } catch (const EstimationError& e) {
    return {std::move(label), std::nullopt, e.what()};
  }
}

double median_duration(const SpellSet& spells) {
  std::vector<int> d;
  for (const auto& s : spells.spells) d.push_back(s.duration);
  std::sort(d.begin(), d.end());
  const std::size_t h = d.size() / 2;
  return d.size() % 2 ? d[h] : 0.5 * (d[h - 1] + d[h]);
}

}  // namespace

StudyBundle run_study(const StudyConfig& config) {
  if (config.out_dir.empty()) throw StudyError("configure", "no output directory");
  const PriceSeries series = stage("load_series", [&] { return load_series(config.prices_path); });
  const auto calendar_bytes =
      stage("load_recessions", [&] { return read_bytes(config.recessions_path); });
  const RecessionCalendar calendar =
      stage("load_recessions", [&] { return load_recessions(config.recessions_path); });
  const SpellSet spells = stage("extract_spells", [&] {
    SpellSet s = extract_spells(compute_returns(series), calendar, config.rule);
    if (s.spells.size() < 8) throw DataError("too few spells for the study");
    return s;
  });
  const SurvivalData data = SurvivalData::from_spells(spells);

  Bundle bundle;
  nlohmann::json manifest;
  manifest["inputs"] = {{"prices_digest", series.source_digest},
                        {"recessions_digest", fnv1a64_hex(calendar_bytes)},
                        {"recession_rule", config.rule == RecessionRule::Any        ? "any"
                                           : config.rule == RecessionRule::Majority ? "majority"
                                                                                    : "all"},
                        {"first_month", series.rows.front().month.to_string()},
                        {"last_month", series.rows.back().month.to_string()},
                        {"era_split", config.era_split.to_string()}};

  // Spells and descriptives.
  stage("describe", [&] {
    std::ostringstream spells_csv;
    write_spells_csv(spells_csv, spells);
    bundle.add("spells.csv", spells_csv.str());

    double total = 0, loss = 0;
    int longest = 0;
    for (const auto& s : spells.spells) {
      total += s.duration;
      loss += s.price_decline;
      longest = std::max(longest, s.duration);
    }
    const double n = static_cast<double>(spells.spells.size());
    manifest["spells"] = {{"count", spells.spells.size()},
                          {"events", data.events()},
                          {"negative_months", spells.negative_months},
                          {"recession_negative_months", spells.recession_negative_months},
                          {"mean_duration", total / n},
                          {"median_duration", median_duration(spells)},
                          {"max_duration", longest},
                          {"mean_monthly_loss_pct", loss / n},
                          {"max_monthly_loss_pct", spells.max_monthly_loss_pct},
                          {"max_loss_month", spells.max_loss_month
                                                 ? nlohmann::json(spells.max_loss_month->to_string())
                                                 : nlohmann::json(nullptr)}};

    std::ostringstream desc;
    desc << "grouping,group,n,mean,variance,min,max\n";
    std::ostringstream tt;
    tt << "comparison,group_a,group_b,mean_a,variance_a,n_a,mean_b,variance_b,n_b,df,t,"
          "p_two_tail,t_critical\n";
    manifest["ttests"] = nlohmann::json::array();
    const std::pair<Grouping, const char*> groupings[] = {
        {Grouping::None, "none"},
        {Grouping::Era, "era"},
        {Grouping::Recession, "recession"},
        {Grouping::PriceDeclineQuartile, "price_decline"},
        {Grouping::InterestRateQuartile, "interest_rate"}};
    for (const auto& [grouping, name] : groupings) {
      DescribeOptions opt;
      opt.grouping = grouping;
      opt.era_split = config.era_split;
      const auto groups = describe_spells(spells, opt);
      for (const auto& g : groups) {
        desc << name << ',' << g.label << ',' << g.n << ',' << g6(g.mean) << ','
             << g6(g.variance) << ',' << (g.min ? std::to_string(*g.min) : "NA") << ','
             << (g.max ? std::to_string(*g.max) : "NA") << '\n';
      }
      std::vector<std::pair<std::size_t, std::size_t>> pairs;
      if (grouping == Grouping::Era || grouping == Grouping::Recession) pairs = {{0, 1}};
      if (grouping == Grouping::PriceDeclineQuartile) pairs = {{0, 1}, {0, 2}, {0, 3}};
      for (const auto& [a, b] : pairs) {
        const auto& ga = groups[a];
        const auto& gb = groups[b];
        if (ga.n < 2 || gb.n < 2) continue;
        const WelchResult w = welch_t_test(ga.durations, gb.durations);
        const double crit = student_t_quantile(0.975, w.df);
        tt << name << ',' << ga.label << ',' << gb.label << ',' << g6(ga.mean) << ','
           << g6(ga.variance) << ',' << ga.n << ',' << g6(gb.mean) << ',' << g6(gb.variance)
           << ',' << gb.n << ',' << w.df << ',' << g6(w.t) << ',' << g6(w.p_two_tail) << ','
           << g6(crit) << '\n';
        manifest["ttests"].push_back({{"comparison", name},
                                      {"group_a", ga.label},
                                      {"group_b", gb.label},
                                      {"mean_a", *ga.mean},
                                      {"mean_b", *gb.mean},
                                      {"n_a", ga.n},
                                      {"n_b", gb.n},
                                      {"t", w.t},
                                      {"df", w.df},
                                      {"p_two_tail", w.p_two_tail},
                                      {"t_critical", crit}});
      }
    }
    bundle.add("descriptives.csv", desc.str());
    bundle.add("ttests.csv", tt.str());

    const auto freq = duration_frequencies(spells);
    std::ostringstream fq;
    fq << "duration,relative_frequency,cubic_trend\n";
    std::optional<CubicFit> cubic;
    try {
      cubic = cubic_trend_fit(freq);
    } catch (const std::exception&) {
    }
    for (const auto& [t, f] : freq) {
      const double trend =
          cubic ? cubic->coefficients[0] +
                      t * (cubic->coefficients[1] +
                           t * (cubic->coefficients[2] + t * cubic->coefficients[3]))
                : NAN;
      fq << g6(t) << ',' << g6(f) << ',' << g6(trend) << '\n';
    }
    bundle.add("duration_frequencies.csv", fq.str());
    manifest["cubic_trend"] = cubic ? nlohmann::json{{"coefficients", cubic->coefficients},
                                                     {"r_squared", cubic->r_squared}}
                                    : nlohmann::json(nullptr);
    return 0;
  });

  // Nonparametric curves.
  stage("nonparametric", [&] {
    const Stratum strata[] = {Stratum::all(), Stratum::recession(true), Stratum::recession(false)};
    std::vector<CurveSample> km, smooth;
    nlohmann::json km_json = nlohmann::json::object();
    for (const auto& s : strata) {
      bool any = false;
      for (const auto& r : spells.spells) any = any || s.contains(r);
      if (!any) continue;
      km.push_back(kaplan_meier(spells, s));
      double se1 = 0.0;
      for (const auto& p : km.back().points) {
        if (p.time <= 1.0) se1 = p.std_err;
      }
      km_json[s.label] = {{"survivor_at_1", step_value(km.back(), 1.0)}, {"std_err_at_1", se1}};
      try {
        smooth.push_back(smoothed_hazard(spells, config.smoothing, s));
      } catch (const std::invalid_argument&) {
      }
    }
    std::ostringstream a, b;
    write_curves_csv(a, km);
    write_curves_csv(b, smooth);
    bundle.add("km.csv", a.str());
    bundle.add("smoothed_hazard.csv", b.str());
    manifest["km"] = km_json;
    return 0;
  });

  // Main fits.
  const std::vector<std::string> covs = spell_covariate_names();
  std::vector<Frailty> frailties{Frailty::None};
  if (config.frailty != Frailty::None) frailties.push_back(config.frailty);
  std::vector<ModelEntry> models = stage("fit_models", [&] {
    std::vector<ModelEntry> out;
    for (Frailty fr : frailties) {
      for (Family fam : {Family::Exponential, Family::Weibull, Family::LogNormal}) {
        ModelSpec spec = ModelSpec::parametric(fam, Metric::AFT, covs, fr);
        spec.options = config.options;
        spec.options.robust = true;
        out.push_back(guarded_fit(spec.label(), [&] { return fit_mle(spec, data); }));
      }
    }
    FitOptions cox_opt = config.options;
    cox_opt.robust = true;
    out.push_back(guarded_fit(ModelSpec::cox(covs, cox_opt.ties).label(),
                              [&] { return fit_cox(data, covs, cox_opt.ties, cox_opt); }));
    return out;
  });
  auto find_model = [&](const std::string& label) -> const FitResult* {
    for (const auto& m : models) {
      if (m.label == label && m.fit) return &*m.fit;
    }
    return nullptr;
  };

  // Inference.
  stage("inference", [&] {
    std::ostringstream coef, summ, tests;
    coef << "model,block,parameter,estimate,se_model,se_robust,z,p\n";
    summ << "model,loglik,k1,k2,aic,bic,aic_comparable,ssr,converged,iterations,n,n_events\n";
    tests << "test,statistic,df,p_value\n";
    manifest["models"] = nlohmann::json::object();
    manifest["aic"] = nlohmann::json::object();
    manifest["ssr"] = nlohmann::json::object();
    manifest["tests"] = nlohmann::json::array();
    auto emit_test = [&](const TestResult& t) {
      tests << t.name << ',' << g6(t.statistic) << ',' << t.df << ',' << g6(t.p_value) << '\n';
      manifest["tests"].push_back(to_json(t));
    };
    for (const auto& m : models) {
      if (!m.fit) {
        manifest["models"][m.label] = {{"error", m.error}, {"converged", false}};
        manifest["aic"][m.label] = nullptr;
        manifest["ssr"][m.label] = nullptr;
        summ << m.label << ",NA,NA,NA,NA,NA,NA,NA,no,NA,NA,NA\n";
        continue;
      }
      const FitResult& fit = *m.fit;
      const nlohmann::json j = to_json(fit);
      manifest["models"][m.label] = j;
      manifest["aic"][m.label] = fit.converged ? nlohmann::json(fit.aic()) : nlohmann::json(nullptr);
      auto coef_row = [&](const char* block, const nlohmann::json& p) {
        coef << m.label << ',' << block << ',' << p["name"].get<std::string>();
        for (const char* f : {"estimate", "se_model", "se_robust", "z", "p"}) {
          coef << ',' << (p[f].is_null() ? "NA" : g6(p[f].get<double>()));
        }
        coef << '\n';
      };
      for (const auto& p : j["coefficients"]) coef_row("coefficients", p);
      for (const auto& p : j["ancillary"]) coef_row("ancillary", p);
      if (!j["ln_theta"].is_null()) coef_row("frailty", j["ln_theta"]);
      const double ssr = ssr_goodness(fit, data);
      manifest["ssr"][m.label] = fit.converged ? nlohmann::json(ssr) : nlohmann::json(nullptr);
      summ << m.label << ',' << g6(fit.loglik) << ',' << fit.k1() << ',' << fit.k2() << ','
           << g6(fit.aic()) << ',' << g6(fit.bic()) << ',' << (fit.spec.is_cox() ? "no" : "yes")
           << ',' << g6(ssr) << ',' << (fit.converged ? "yes" : "no") << ',' << fit.iterations
           << ',' << fit.n << ',' << fit.n_events << '\n';
      if (fit.converged) {
        try {
          emit_test(wald_test(fit, fit.spec.covariates));
        } catch (const std::domain_error&) {
        }
      }
    }
    const std::string fr(frailty_name(config.frailty));
    const std::pair<std::string, std::string> lr_pairs[] = {
        {"exponential/aft/none", "weibull/aft/none"},
        {"exponential/aft/" + fr, "weibull/aft/" + fr},
        {"exponential/aft/none", "exponential/aft/" + fr},
        {"weibull/aft/none", "weibull/aft/" + fr},
        {"lognormal/aft/none", "lognormal/aft/" + fr}};
    for (const auto& [a, b] : lr_pairs) {
      const FitResult* fa = find_model(a);
      const FitResult* fb = find_model(b);
      if (!fa || !fb || fa == fb || !fa->converged || !fb->converged) continue;
      try {
        emit_test(lr_test(*fa, *fb, 1));
      } catch (const InconsistentFitsError&) {
      }
    }
    const FitResult* cox = find_model("cox/" + std::string(ties_name(config.options.ties)));
    if (cox && cox->converged) {
      const PhTestResult ph = ph_assumption_test(*cox, data);
      emit_test(ph.global);
      for (const auto& t : ph.per_covariate) emit_test(t);
    }
    bundle.add("fit_coefficients.csv", coef.str());
    bundle.add("fit_summary.csv", summ.str());
    bundle.add("tests.csv", tests.str());
    return 0;
  });

  // Residual battery for the log-normal fits.
  stage("diagnostics", [&] {
    std::ostringstream bat;
    bat << "model,kind,statistic,value,p_value\n";
    manifest["residual_battery"] = nlohmann::json::object();
    for (const std::string& label :
         {std::string("lognormal/aft/none"), "lognormal/aft/" + std::string(frailty_name(config.frailty))}) {
      const FitResult* fit = find_model(label);
      if (!fit || !fit->converged) continue;
      const Eigen::MatrixXd regs = fit_regressors(*fit, data);
      const Eigen::MatrixXd lp = linear_predictor(*fit, data);
      std::vector<ResidualSet> sets;
      nlohmann::json mj = nlohmann::json::object();
      for (auto kind : {ResidualKind::CoxSnell, ResidualKind::Martingale, ResidualKind::Deviance}) {
        sets.push_back(residuals(*fit, data, kind));
        const auto& v = sets.back().values;
        const std::string kname(residual_kind_name(kind));
        const ResidualSummary s = residual_summary(v);
        const TestResult bg = bg_serial_test(v, 2, regs);
        const BpgResult bpg = bpg_hetero_test(v, lp);
        auto row = [&](const char* stat, double value, std::optional<double> p = {}) {
          bat << label << ',' << kname << ',' << stat << ',' << g6(value) << ',' << g6(p) << '\n';
        };
        row("mean", s.mean);
        row("median", s.median);
        row("maximum", s.max);
        row("minimum", s.min);
        row("std_dev", s.std_dev);
        row("skewness", s.skewness.value_or(NAN));
        row("kurtosis", s.kurtosis.value_or(NAN));
        if (s.jarque_bera) row("jarque_bera", s.jarque_bera->statistic, s.jarque_bera->p_value);
        row("sum", s.sum);
        row("sum_sq_dev", s.sum_sq_dev);
        row("n", s.n);
        row("bg_chi2", bg.statistic, bg.p_value);
        row("bpg_chi2", bpg.lm.statistic, bpg.lm.p_value);
        row("bpg_scaled_ss", bpg.scaled.statistic, bpg.scaled.p_value);
        mj[kname] = {{"summary", to_json(s)},
                     {"breusch_godfrey", to_json(bg)},
                     {"bpg_lm", to_json(bpg.lm)},
                     {"bpg_scaled", to_json(bpg.scaled)}};
        std::ostringstream qq;
        write_qq_csv(qq, qq_points(v));
        bundle.add("qq_" + file_tag(label) + "_" + kname + ".csv", qq.str());
      }
      std::ostringstream res;
      write_residuals_csv(res, sets);
      bundle.add("residuals_" + file_tag(label) + ".csv", res.str());
      manifest["residual_battery"][label] = mj;
    }
    bundle.add("residual_battery.csv", bat.str());
    return 0;
  });

  // Hazard curves: overall fits and stratified log-normal fits.
  stage("stratified_fits", [&] {
    std::ostringstream strat, peaks;
    strat << "plan,model,stratum,n_spells,n_events,dropped,converged,loglik,aic,message\n";
    peaks << "model,stratum,t_star,h_star,note\n";
    manifest["hazard_peaks"] = nlohmann::json::array();
    manifest["stratified"] = nlohmann::json::array();
    std::vector<CurveSample> curves;
    auto emit_curves = [&](const std::string& model, const std::vector<HazardCurve>& family) {
      for (const auto& hc : family) {
        CurveSample c = hc.curve;
        c.stratum = model + " | " + hc.stratum;
        curves.push_back(std::move(c));
        peaks << model << ',' << hc.stratum << ','
              << (hc.peak ? g6(hc.peak->t_star) : "NA") << ','
              << (hc.peak ? g6(hc.peak->h_star) : "NA") << ','
              << (hc.peak ? "" : "monotone") << '\n';
        manifest["hazard_peaks"].push_back(
            {{"model", model},
             {"stratum", hc.stratum},
             {"t_star", hc.peak ? nlohmann::json(hc.peak->t_star) : nlohmann::json(nullptr)},
             {"h_star", hc.peak ? nlohmann::json(hc.peak->h_star) : nlohmann::json(nullptr)}});
      }
    };
    for (const auto& m : models) {
      if (!m.fit || m.fit->spec.is_cox()) continue;
      emit_curves(m.label, hazard_curve_family({{"all", m.fit->n, m.fit->n_events, {}, m.fit, ""}},
                                               config.grid));
    }
    for (const char* cov : {"price_decline", "interest_rate"}) {
      const auto plan = StratificationPlan::quartiles(cov, std::string("recession"));
      for (Frailty fr : frailties) {
        ModelSpec spec = ModelSpec::parametric(Family::LogNormal, Metric::AFT, covs, fr);
        spec.options = config.options;
        const auto fits = stratified_fits(spec, data, plan);
        for (const auto& sf : fits) {
          std::string dropped;
          for (const auto& d : sf.dropped) dropped += (dropped.empty() ? "" : ";") + d;
          const bool ok = sf.fit && sf.fit->converged;
          strat << cov << ',' << spec.label() << ',' << sf.label << ',' << sf.n_spells << ','
                << sf.n_events << ',' << dropped << ',' << (ok ? "yes" : "no") << ','
                << (sf.fit ? g6(sf.fit->loglik) : "NA") << ','
                << (sf.fit ? g6(sf.fit->aic()) : "NA") << ',' << csv_text(sf.error) << '\n';
          manifest["stratified"].push_back(
              {{"plan", cov},
               {"model", spec.label()},
               {"stratum", sf.label},
               {"n_spells", sf.n_spells},
               {"n_events", sf.n_events},
               {"converged", ok},
               {"loglik", sf.fit ? nlohmann::json(sf.fit->loglik) : nlohmann::json(nullptr)},
               {"error", sf.error}});
        }
        emit_curves(spec.label(), hazard_curve_family(fits, config.grid));
      }
    }
    std::ostringstream hc;
    write_curves_csv(hc, curves);
    bundle.add("hazard_curves.csv", hc.str());
    bundle.add("hazard_peaks.csv", peaks.str());
    bundle.add("stratified_fits.csv", strat.str());
    return 0;
  });

  return stage("write_bundle", [&] {
    namespace fs = std::filesystem;
    fs::create_directories(config.out_dir);
    StudyBundle result;
    manifest["files"] = nlohmann::json::object();
    for (const auto& [name, content] : bundle.files) {
      std::ofstream out(fs::path(config.out_dir) / name, std::ios::binary);
      out << content;
      if (!out) throw std::runtime_error("cannot write '" + name + "'");
      manifest["files"][name] = fnv1a64_hex(content);
      result.files.push_back(name);
    }
    const std::string text = manifest.dump(2) + "\n";
    std::ofstream out(fs::path(config.out_dir) / "manifest.json", std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write 'manifest.json'");
    result.files.push_back("manifest.json");
    std::sort(result.files.begin(), result.files.end());
    result.manifest = std::move(manifest);
    return result;
  });
}

}  // namespace hazardlab
