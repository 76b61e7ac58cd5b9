// hazardlab: command-line front end for spell extraction, survival fits,
// diagnostics and the full study bundle.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "hazardlab/analysis_report.hpp"
#include "hazardlab/data_pipeline.hpp"
#include "hazardlab/diagnostics.hpp"
#include "hazardlab/estimation.hpp"
#include "hazardlab/inference.hpp"
#include "hazardlab/nonparametric.hpp"
#include "hazardlab/serialization.hpp"
#include "hazardlab/simulation.hpp"

namespace hl = hazardlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNoConvergence = 3;

const char* kFormats = R"(File formats:
  prices CSV       header date,real_price,long_rate_pct; date YYYY-MM, one row per
                   month with no gaps; real_price > 0
  recessions CSV   header begin,end; inclusive YYYY-MM intervals, sorted, disjoint
  spells CSV       header start,duration,event,recession,price_decline_pct,interest_rate_pct
  curves CSV       header time,estimate,std_err,stratum
  residuals CSV    header spell_start,kind,value
  Q-Q CSV          header theoretical,empirical)";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotConverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Inputs {
  std::string prices;
  std::string recessions = "data/recessions.csv";
  std::string spells;
  std::string rule = "any";

  void add(CLI::App* app) {
    app->add_option("--prices", prices, "Monthly prices CSV");
    app->add_option("--recessions", recessions, "Recession calendar CSV")->capture_default_str();
    app->add_option("--spells", spells, "Spells CSV, used instead of --prices");
    app->add_option("--recession-rule", rule, "Spell recession flag: any, majority or all")
        ->check(CLI::IsMember({"any", "majority", "all"}))
        ->capture_default_str();
  }

  hl::SpellSet load() const {
    if (!spells.empty()) {
      std::ifstream in(spells, std::ios::binary);
      if (!in) throw hl::DataError("cannot open '" + spells + "'");
      return hl::parse_spells_csv(in);
    }
    if (prices.empty()) throw UsageError("either --prices or --spells is required");
    return hl::extract_spells(hl::compute_returns(hl::load_series(prices)),
                              hl::load_recessions(recessions), hl::parse_recession_rule(rule));
  }
};

struct ModelFlags {
  std::string family = "lognormal";
  std::string metric = "aft";
  std::string frailty = "none";
  std::string ties = "efron";
  std::vector<std::string> covariates = hl::spell_covariate_names();
  bool robust = false;
  double tolerance = 1e-8;
  int max_iter = 100;

  void add(CLI::App* app) {
    app->add_option("--family", family,
                    "exponential, weibull, gamma, gengamma or lognormal (ignored for --metric cox)")
        ->capture_default_str();
    app->add_option("--metric", metric, "aft, ph or cox")
        ->check(CLI::IsMember({"aft", "ph", "cox"}))
        ->capture_default_str();
    app->add_option("--frailty", frailty, "none, gamma or invgauss")
        ->check(CLI::IsMember({"none", "gamma", "invgauss"}))
        ->capture_default_str();
    app->add_option("--ties", ties, "Cox tie handling: efron or breslow")
        ->check(CLI::IsMember({"efron", "breslow"}))
        ->capture_default_str();
    app->add_option("--covariates", covariates, "Covariates (recession, price_decline, interest_rate)")
        ->delimiter(',')
        ->capture_default_str();
    app->add_flag("--robust", robust, "Sandwich standard errors");
    app->add_option("--tolerance", tolerance, "Gradient max-norm tolerance")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--max-iter", max_iter, "Newton iteration limit")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }

  hl::ModelSpec spec() const {
    hl::ModelSpec s;
    try {
      s.metric = hl::parse_metric(metric);
      if (s.metric == hl::Metric::PartialLikelihood) {
        s = hl::ModelSpec::cox(covariates);
      } else {
        s.family = hl::parse_family(family);
        s.covariates = covariates;
      }
      s.frailty = hl::parse_frailty(frailty);
      s.options.ties = hl::parse_ties(ties);
      s.options.robust = robust;
      s.options.tolerance = tolerance;
      s.options.max_iterations = max_iter;
      s.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return s;
  }
};

hl::FitResult run_fit(const hl::ModelSpec& spec, const hl::SurvivalData& data) {
  if (spec.is_cox()) return hl::fit_cox(data, spec.covariates, spec.options.ties, spec.options);
  return hl::fit_mle(spec, data);
}

std::string g6(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string g6(const std::optional<double>& v) { return v ? g6(*v) : "NA"; }

// Writes to --out when given, the output stream otherwise.
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw hl::DataError("cannot write '" + path + "'");
}

int cmd_spells(const Inputs& in, const std::string& out) {
  std::ostringstream s;
  hl::write_spells_csv(s, in.load());
  emit(out, s.str());
  return kExitOk;
}

int cmd_describe(const Inputs& in, const std::string& grouping, const std::string& era,
                 const std::string& out) {
  const hl::SpellSet spells = in.load();
  hl::DescribeOptions opt;
  if (grouping == "none") opt.grouping = hl::Grouping::None;
  if (grouping == "recession") opt.grouping = hl::Grouping::Recession;
  if (grouping == "era") opt.grouping = hl::Grouping::Era;
  if (grouping == "price_decline") opt.grouping = hl::Grouping::PriceDeclineQuartile;
  if (grouping == "interest_rate") opt.grouping = hl::Grouping::InterestRateQuartile;
  try {
    opt.era_split = hl::YearMonth::parse(era);
  } catch (const std::exception& e) {
    throw UsageError(std::string("--era-split: ") + e.what());
  }
  const auto groups = hl::describe_spells(spells, opt);
  std::ostringstream s;
  s << "group,n,mean,variance,min,max\n";
  for (const auto& g : groups) {
    s << g.label << ',' << g.n << ',' << g6(g.mean) << ',' << g6(g.variance) << ','
      << (g.min ? std::to_string(*g.min) : "NA") << ',' << (g.max ? std::to_string(*g.max) : "NA")
      << '\n';
  }
  if (groups.size() >= 2) {
    s << "\ngroup_a,group_b,t,df,p_two_tail\n";
    for (std::size_t b = 1; b < groups.size(); ++b) {
      if (groups[0].n < 2 || groups[b].n < 2) continue;
      const auto w = hl::welch_t_test(groups[0].durations, groups[b].durations);
      s << groups[0].label << ',' << groups[b].label << ',' << g6(w.t) << ',' << w.df << ','
        << g6(w.p_two_tail) << '\n';
    }
  }
  emit(out, s.str());
  return kExitOk;
}

int cmd_km(const Inputs& in, const std::string& by, bool smoothed, double bandwidth,
           const std::string& out) {
  const hl::SpellSet spells = in.load();
  std::vector<hl::Stratum> strata;
  if (by == "recession") {
    strata = {hl::Stratum::recession(true), hl::Stratum::recession(false)};
  } else {
    strata = {hl::Stratum::all()};
  }
  std::vector<hl::CurveSample> curves;
  hl::SmoothingOptions opt;
  opt.bandwidth = bandwidth;
  for (const auto& st : strata) {
    curves.push_back(smoothed ? hl::smoothed_hazard(spells, opt, st) : hl::kaplan_meier(spells, st));
  }
  std::ostringstream s;
  hl::write_curves_csv(s, curves);
  emit(out, s.str());
  return kExitOk;
}

int cmd_fit(const Inputs& in, const ModelFlags& flags, const std::string& out) {
  const hl::ModelSpec spec = flags.spec();
  const hl::SurvivalData data = hl::SurvivalData::from_spells(in.load());
  const hl::FitResult fit = run_fit(spec, data);
  emit(out, hl::to_json(fit).dump(2) + "\n");
  if (!fit.converged) throw NotConverged(spec.label() + ": " + fit.message);
  return kExitOk;
}

int cmd_diagnose(const Inputs& in, const ModelFlags& flags, int lags, const std::string& out,
                 const std::string& residuals_out, const std::string& qq_out,
                 const std::string& qq_kind) {
  const hl::ModelSpec spec = flags.spec();
  const hl::SurvivalData data = hl::SurvivalData::from_spells(in.load());
  const hl::FitResult fit = run_fit(spec, data);
  if (!fit.converged) throw NotConverged(spec.label() + ": " + fit.message);
  const Eigen::MatrixXd regs = hl::fit_regressors(fit, data);
  const Eigen::MatrixXd lp = hl::linear_predictor(fit, data);
  std::ostringstream s;
  s << "statistic,cox_snell,p,martingale,p,deviance,p\n";
  std::vector<hl::ResidualSet> sets;
  std::vector<hl::ResidualSummary> sums;
  std::vector<hl::TestResult> bg;
  std::vector<hl::BpgResult> bpg;
  for (auto kind : {hl::ResidualKind::CoxSnell, hl::ResidualKind::Martingale,
                    hl::ResidualKind::Deviance}) {
    sets.push_back(hl::residuals(fit, data, kind));
    sums.push_back(hl::residual_summary(sets.back().values));
    bg.push_back(hl::bg_serial_test(sets.back().values, lags, regs));
    bpg.push_back(hl::bpg_hetero_test(sets.back().values, lp));
  }
  auto row = [&](const char* name, auto value, auto p) {
    s << name;
    for (std::size_t k = 0; k < 3; ++k) s << ',' << g6(value(k)) << ',' << g6(p(k));
    s << '\n';
  };
  auto none = [](std::size_t) { return std::optional<double>{}; };
  row("mean", [&](std::size_t k) { return sums[k].mean; }, none);
  row("median", [&](std::size_t k) { return sums[k].median; }, none);
  row("maximum", [&](std::size_t k) { return sums[k].max; }, none);
  row("minimum", [&](std::size_t k) { return sums[k].min; }, none);
  row("std_dev", [&](std::size_t k) { return sums[k].std_dev; }, none);
  row("skewness", [&](std::size_t k) { return sums[k].skewness; }, none);
  row("kurtosis", [&](std::size_t k) { return sums[k].kurtosis; }, none);
  row("jarque_bera",
      [&](std::size_t k) {
        return sums[k].jarque_bera ? std::optional(sums[k].jarque_bera->statistic) : std::nullopt;
      },
      [&](std::size_t k) {
        return sums[k].jarque_bera ? std::optional(sums[k].jarque_bera->p_value) : std::nullopt;
      });
  row("sum", [&](std::size_t k) { return sums[k].sum; }, none);
  row("sum_sq_dev", [&](std::size_t k) { return sums[k].sum_sq_dev; }, none);
  row("n", [&](std::size_t k) { return static_cast<double>(sums[k].n); }, none);
  row("bg_chi2", [&](std::size_t k) { return bg[k].statistic; },
      [&](std::size_t k) { return std::optional(bg[k].p_value); });
  row("bpg_chi2", [&](std::size_t k) { return bpg[k].lm.statistic; },
      [&](std::size_t k) { return std::optional(bpg[k].lm.p_value); });
  row("bpg_scaled_ss", [&](std::size_t k) { return bpg[k].scaled.statistic; },
      [&](std::size_t k) { return std::optional(bpg[k].scaled.p_value); });
  s << "ssr," << g6(hl::ssr_goodness(fit, data)) << ",NA,NA,NA,NA,NA\n";
  emit(out, s.str());
  if (!residuals_out.empty()) {
    std::ostringstream r;
    hl::write_residuals_csv(r, sets);
    emit(residuals_out, r.str());
  }
  if (!qq_out.empty()) {
    std::ostringstream q;
    const auto kind = hl::parse_residual_kind(qq_kind);
    hl::write_qq_csv(q, hl::qq_points(sets[static_cast<std::size_t>(kind)].values));
    emit(qq_out, q.str());
  }
  return kExitOk;
}

int cmd_compare(const Inputs& in, const ModelFlags& flags, const std::vector<std::string>& families,
                bool ph_test, const std::string& out) {
  const hl::SurvivalData data = hl::SurvivalData::from_spells(in.load());
  std::vector<hl::FitResult> fits;
  for (const auto& f : families) {
    ModelFlags local = flags;
    if (f == "cox") {
      local.metric = "cox";
    } else {
      local.family = f;
      if (local.metric == "cox") local.metric = "aft";
    }
    fits.push_back(run_fit(local.spec(), data));
  }
  std::ostringstream s;
  s << "model,loglik,k1,k2,aic,bic,aic_comparable,converged\n";
  bool all_converged = true;
  for (const auto& f : fits) {
    const auto ic = hl::information_criteria(f);
    s << f.spec.label() << ',' << g6(f.loglik) << ',' << f.k1() << ',' << f.k2() << ','
      << g6(ic.aic) << ',' << g6(ic.bic) << ',' << (ic.comparable ? "yes" : "no") << ','
      << (f.converged ? "yes" : "no") << '\n';
    all_converged = all_converged && f.converged;
  }
  s << "\ntest,statistic,df,p_value\n";
  for (std::size_t a = 0; a < fits.size(); ++a) {
    for (std::size_t b = 0; b < fits.size(); ++b) {
      if (a == b || !fits[a].converged || !fits[b].converged) continue;
      const int df = hl::parameter_count(fits[b].spec) - hl::parameter_count(fits[a].spec);
      if (df < 1 || !hl::is_nested(fits[a], fits[b])) continue;
      const auto t = hl::lr_test(fits[a], fits[b], df);
      s << t.name << ',' << g6(t.statistic) << ',' << t.df << ',' << g6(t.p_value) << '\n';
    }
  }
  if (ph_test) {
    const hl::FitResult cox = hl::fit_cox(data, flags.covariates, hl::parse_ties(flags.ties));
    if (!cox.converged) throw NotConverged("cox: " + cox.message);
    const auto ph = hl::ph_assumption_test(cox, data);
    for (const auto& t : std::vector<hl::TestResult>{ph.global}) {
      s << t.name << ',' << g6(t.statistic) << ',' << t.df << ',' << g6(t.p_value) << '\n';
    }
    for (const auto& t : ph.per_covariate) {
      s << t.name << ',' << g6(t.statistic) << ',' << t.df << ',' << g6(t.p_value) << '\n';
    }
  }
  emit(out, s.str());
  if (!all_converged) throw NotConverged("at least one model did not converge");
  return kExitOk;
}

int cmd_study(const Inputs& in, const ModelFlags& flags, const std::string& frailty,
              double bandwidth, const std::string& out) {
  if (out.empty()) throw UsageError("study needs --out DIR");
  if (in.prices.empty()) throw UsageError("study needs --prices");
  hl::StudyConfig cfg;
  cfg.prices_path = in.prices;
  cfg.recessions_path = in.recessions;
  cfg.out_dir = out;
  cfg.rule = hl::parse_recession_rule(in.rule);
  cfg.options.tolerance = flags.tolerance;
  cfg.options.max_iterations = flags.max_iter;
  cfg.options.ties = hl::parse_ties(flags.ties);
  cfg.frailty = hl::parse_frailty(frailty);
  cfg.smoothing.bandwidth = bandwidth;
  const hl::StudyBundle bundle = hl::run_study(cfg);
  for (const auto& f : bundle.files) std::cout << f << '\n';
  return kExitOk;
}

int cmd_simulate(int months, const std::string& out) {
  emit(out, hl::synthetic_prices_csv(months, hl::seed_from_env()));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Duration analysis of stock market price-decline spells"};
  app.footer(kFormats);
  app.require_subcommand(1);
  app.set_version_flag("--version", "hazardlab 1.0");

  Inputs in;
  ModelFlags flags;
  std::string out;
  std::string grouping = "recession";
  std::string era = "1938-07";
  std::string by = "recession";
  bool smoothed = false;
  double bandwidth = 1.5;
  int lags = 2;
  std::string residuals_out, qq_out, qq_kind = "deviance";
  std::vector<std::string> families{"exponential", "weibull", "lognormal"};
  bool ph_test = false;
  std::string study_frailty = "gamma";
  int months = 1746;

  auto add_out = [&](CLI::App* c, const char* what) {
    c->add_option("--out", out, what);
    c->footer(kFormats);
  };

  auto* spells = app.add_subcommand("spells", "Extract decline spells and write the spells CSV");
  in.add(spells);
  add_out(spells, "Output file (default: output stream)");

  auto* describe = app.add_subcommand("describe", "Grouped duration statistics and Welch t-tests");
  in.add(describe);
  describe->add_option("--grouping", grouping, "none, recession, era, price_decline or interest_rate")
      ->check(CLI::IsMember({"none", "recession", "era", "price_decline", "interest_rate"}))
      ->capture_default_str();
  describe->add_option("--era-split", era, "First month of the later era (YYYY-MM)")
      ->capture_default_str();
  add_out(describe, "Output file (default: output stream)");

  auto* km = app.add_subcommand("km", "Kaplan-Meier survivor or smoothed hazard curves");
  in.add(km);
  km->add_option("--by", by, "all or recession")
      ->check(CLI::IsMember({"all", "recession"}))
      ->capture_default_str();
  km->add_flag("--smoothed", smoothed, "Kernel-smoothed hazard instead of the survivor");
  km->add_option("--bandwidth", bandwidth, "Kernel bandwidth in months")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_out(km, "Output file (default: output stream)");

  auto* fit = app.add_subcommand("fit", "Fit a survival model and print its JSON");
  in.add(fit);
  flags.add(fit);
  add_out(fit, "Output file (default: output stream)");

  auto* diagnose = app.add_subcommand("diagnose", "Residual battery of a fitted model");
  in.add(diagnose);
  flags.add(diagnose);
  diagnose->add_option("--lags", lags, "Breusch-Godfrey lags")->check(CLI::PositiveNumber)->capture_default_str();
  diagnose->add_option("--residuals-out", residuals_out, "Residuals CSV");
  diagnose->add_option("--qq-out", qq_out, "Q-Q CSV");
  diagnose->add_option("--qq-kind", qq_kind, "Residual kind for --qq-out")
      ->check(CLI::IsMember({"cox_snell", "martingale", "deviance"}))
      ->capture_default_str();
  add_out(diagnose, "Output file (default: output stream)");

  auto* compare = app.add_subcommand("compare", "Information criteria and LR tests across families");
  in.add(compare);
  flags.add(compare);
  compare->add_option("--models", families, "Families to compare (cox allowed)")
      ->delimiter(',')
      ->capture_default_str();
  compare->add_flag("--ph-test", ph_test, "Add the scaled-Schoenfeld PH test");
  add_out(compare, "Output file (default: output stream)");

  auto* study = app.add_subcommand("study", "Run the full study and write the report bundle");
  in.add(study);
  flags.add(study);
  study->add_option("--study-frailty", study_frailty, "Frailty of the frailty-corrected fits")
      ->check(CLI::IsMember({"none", "gamma", "invgauss"}))
      ->capture_default_str();
  study->add_option("--bandwidth", bandwidth, "Kernel bandwidth in months")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_out(study, "Output directory");

  auto* simulate = app.add_subcommand("simulate", "Synthetic prices CSV seeded by HAZARDLAB_SEED");
  simulate->add_option("--months", months, "Series length")->check(CLI::Range(2, 100000))->capture_default_str();
  add_out(simulate, "Output file (default: output stream)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*spells) return cmd_spells(in, out);
    if (*describe) return cmd_describe(in, grouping, era, out);
    if (*km) return cmd_km(in, by, smoothed, bandwidth, out);
    if (*fit) return cmd_fit(in, flags, out);
    if (*diagnose) return cmd_diagnose(in, flags, lags, out, residuals_out, qq_out, qq_kind);
    if (*compare) return cmd_compare(in, flags, families, ph_test, out);
    if (*study) return cmd_study(in, flags, study_frailty, bandwidth, out);
    if (*simulate) return cmd_simulate(months, out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NotConverged& e) {
    std::cerr << "not converged: " << e.what() << '\n';
    return kExitNoConvergence;
  } catch (const hl::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const hl::StudyError& e) {
    std::cerr << "study failed at stage " << e.what() << '\n';
    const bool data_stage = e.stage() == "load_series" || e.stage() == "load_recessions" ||
                            e.stage() == "extract_spells";
    return data_stage ? kExitData : kExitNoConvergence;
  } catch (const hl::EstimationError& e) {
    std::cerr << "estimation error: " << e.what() << '\n';
    return kExitNoConvergence;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
