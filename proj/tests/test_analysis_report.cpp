#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "hazardlab/analysis_report.hpp"
#include "hazardlab/serialization.hpp"
#include "hazardlab/simulation.hpp"
#include "test_support.hpp"

using namespace hazardlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("hazardlab_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SpellSet synthetic_spells(std::uint64_t seed) {
  std::istringstream prices(synthetic_prices_csv(1747, seed));
  std::ifstream cal(HAZARDLAB_DATA_DIR "/recessions.csv");
  return extract_spells(compute_returns(parse_series(prices)), parse_recessions(cal));
}

StudyConfig study_config(const fs::path& dir, const fs::path& out) {
  StudyConfig c;
  c.prices_path = (dir / "prices.csv").string();
  c.recessions_path = HAZARDLAB_DATA_DIR "/recessions.csv";
  c.out_dir = out.string();
  return c;
}

}  // namespace

TEST_SUITE("analysis_report") {

TEST_CASE("stratification plans validate") {
  CHECK_THROWS_AS(StratificationPlan::custom("x", {2.0, 1.0}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(StratificationPlan::quartiles("").validate(), std::invalid_argument);
  CHECK_NOTHROW(StratificationPlan::single().validate());
}

TEST_CASE("strata partition the spells") {
  const auto spells = synthetic_spells(hazardlab::seed_from_env());
  const auto data = SurvivalData::from_spells(spells);
  const auto q = assign_strata(data, StratificationPlan::quartiles("price_decline"));
  REQUIRE(q.labels.size() == 4);
  CHECK(q.labels[0] == "price_decline Q1");
  std::vector<int> counts(4, 0);
  for (int s : q.stratum_of) ++counts[s];
  for (int c : counts) CHECK(std::abs(c - data.n() / 4.0) <= 1.0);

  const auto crossed = assign_strata(data, StratificationPlan::quartiles("price_decline", "recession"));
  REQUIRE(crossed.labels.size() == 8);
  CHECK(crossed.labels[0] == "price_decline Q1 / recession");
  CHECK(crossed.labels[1] == "price_decline Q1 / no recession");
  std::vector<int> c8(8, 0);
  for (int s : crossed.stratum_of) ++c8[s];
  CHECK(std::accumulate(c8.begin(), c8.end(), 0) == data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    CHECK(crossed.stratum_of[i] / 2 == q.stratum_of[i]);
    CHECK((crossed.stratum_of[i] % 2 == 0) == (data.covariates(i, data.column("recession")) == 1.0));
  }
}

TEST_CASE("breakpoint ties go to the lower group") {
  SurvivalData d;
  d.time = {1, 2, 3, 4};
  d.event = {1, 1, 1, 1};
  d.names = {"z"};
  d.covariates = Eigen::Vector4d(1.0, 2.0, 2.0, 3.0);
  const auto a = assign_strata(d, StratificationPlan::custom("z", {2.0}));
  CHECK(a.stratum_of == std::vector<int>{0, 0, 0, 1});
  CHECK(a.labels == std::vector<std::string>{"z G1", "z G2"});
  d.covariates(0, 0) = 0.5;
  CHECK_THROWS_AS(assign_strata(d, StratificationPlan::custom("z", {1.0}, "z")), std::invalid_argument);
}

TEST_CASE("a single stratum reproduces the unstratified fit") {
  const auto spells = synthetic_spells(hazardlab::seed_from_env() + 1);
  const auto spec = ModelSpec::parametric(Family::LogNormal, Metric::AFT, spell_covariate_names());
  const auto whole = fit_mle(spec, spells);
  const auto fits = stratified_fits(spec, spells, StratificationPlan::single());
  REQUIRE(fits.size() == 1);
  REQUIRE(fits[0].fit.has_value());
  CHECK(std::abs(fits[0].fit->loglik - whole.loglik) < 1e-10);
  CHECK(fits[0].n_spells == static_cast<int>(spells.spells.size()));
}

TEST_CASE("empty strata are named") {
  const auto spells = synthetic_spells(hazardlab::seed_from_env() + 2);
  const auto spec = ModelSpec::parametric(Family::LogNormal, Metric::AFT, {"interest_rate"});
  try {
    stratified_fits(spec, spells, StratificationPlan::custom("price_decline", {-5.0}));
    FAIL("expected an empty stratum");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("price_decline G1") != std::string::npos);
  }
}

TEST_CASE("stratified fits drop constant covariates and report small strata") {
  const auto spells = synthetic_spells(hazardlab::seed_from_env() + 3);
  const auto spec = ModelSpec::parametric(Family::LogNormal, Metric::AFT, spell_covariate_names());
  const auto fits = stratified_fits(spec, spells, StratificationPlan::quartiles("price_decline", "recession"));
  REQUIRE(fits.size() == 8);
  int total = 0;
  for (const auto& f : fits) {
    total += f.n_spells;
    CHECK(std::find(f.dropped.begin(), f.dropped.end(), "recession") != f.dropped.end());
    if (f.fit) CHECK(std::find(f.fit->spec.covariates.begin(), f.fit->spec.covariates.end(), "recession") ==
                     f.fit->spec.covariates.end());
    if (!f.fit) CHECK_FALSE(f.error.empty());
  }
  CHECK(total == static_cast<int>(spells.spells.size()));
}

TEST_CASE("hazard curves peak where hazard_peak says") {
  const auto spells = synthetic_spells(hazardlab::seed_from_env() + 4);
  const auto spec = ModelSpec::parametric(Family::LogNormal, Metric::AFT, {"price_decline", "interest_rate"});
  const auto fits = stratified_fits(spec, spells, StratificationPlan::quartiles("price_decline"));
  const auto curves = hazard_curve_family(fits);
  int checked = 0;
  for (const auto& c : curves) {
    if (!c.peak) continue;
    double top = 0.0;
    for (const auto& p : c.curve.points) top = std::max(top, p.estimate);
    CHECK(std::abs(top - c.peak->h_star) < 1e-6);
    ++checked;
    CHECK(c.curve.points.front().time == doctest::Approx(0.5));
    CHECK(c.curve.points.back().time == doctest::Approx(12.0));
  }
  CHECK(checked >= 1);

  const auto expo = ModelSpec::parametric(Family::Exponential, Metric::AFT, {"interest_rate"});
  const auto flat = hazard_curve_family(stratified_fits(expo, spells, StratificationPlan::single()));
  REQUIRE(flat.size() == 1);
  CHECK_FALSE(flat[0].peak.has_value());
  CHECK_FALSE(flat[0].peak_note.empty());
  const double h0 = flat[0].curve.points.front().estimate;
  for (const auto& p : flat[0].curve.points) CHECK(std::abs(p.estimate - h0) < 1e-12);
}

TEST_CASE("study bundle is deterministic and its manifest round-trips") {
  const fs::path dir = scratch_dir("study");
  std::ofstream(dir / "prices.csv") << synthetic_prices_csv(1747, hazardlab::seed_from_env());
  const auto a = run_study(study_config(dir, dir / "a"));
  const auto b = run_study(study_config(dir, dir / "b"));
  REQUIRE(a.files == b.files);
  CHECK(std::find(a.files.begin(), a.files.end(), "manifest.json") != a.files.end());
  for (const auto& f : a.files) {
    CAPTURE(f);
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  int checked = 0;
  for (const auto& [label, m] : manifest.at("models").items()) {
    if (m.contains("aic") && !m.at("aic").is_null()) {
      CAPTURE(label);
      CHECK(aic_from_json(m) == m.at("aic").get<double>());
      ++checked;
    }
  }
  CHECK(checked >= 3);
}

TEST_CASE("study failures name the stage") {
  const fs::path dir = scratch_dir("study_fail");
  std::ofstream(dir / "prices.csv") << "";
  try {
    run_study(study_config(dir, dir / "out"));
    FAIL("expected a study error");
  } catch (const StudyError& e) {
    CHECK(e.stage() == "load_series");
  }
  std::ofstream(dir / "prices.csv") << synthetic_prices_csv(60, 1);
  StudyConfig c = study_config(dir, dir / "out");
  c.recessions_path = (dir / "missing.csv").string();
  try {
    run_study(c);
    FAIL("expected a study error");
  } catch (const StudyError& e) {
    CHECK(e.stage() == "load_recessions");
  }
}

}
