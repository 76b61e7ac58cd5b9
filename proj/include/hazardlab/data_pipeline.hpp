#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hazardlab {

/// Raised for malformed or inconsistent input data. `line()` is the 1-based
/// line of the offending record, or 0 when not tied to a line.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, int line = 0);
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Calendar month. Ordered; `index()` counts months since year 0.
struct YearMonth {
  int year = 0;
  int month = 1;  // 1..12

  static YearMonth parse(std::string_view text);  // "YYYY-MM"
  static YearMonth from_index(int index);
  int index() const { return year * 12 + (month - 1); }
  std::string to_string() const;
  YearMonth next() const { return from_index(index() + 1); }

  friend auto operator<=>(const YearMonth&, const YearMonth&) = default;
};

struct PriceObservation {
  YearMonth month;
  double real_price;
  double long_rate_pct;
};

/// Contiguous monthly observations with strictly positive prices.
struct PriceSeries {
  std::vector<PriceObservation> rows;
  std::string source_digest;  // fnv1a64 of the input bytes
};

struct ReturnObservation {
  YearMonth month;
  double log_return;      // ln P_t - ln P_{t-1}
  double long_rate_pct;   // rate observed in month t
};

struct ReturnSeries {
  std::vector<ReturnObservation> rows;
  std::string source_digest;
};

struct MonthInterval {
  YearMonth begin;
  YearMonth end;  // inclusive
};

/// Sorted, non-overlapping recession intervals.
class RecessionCalendar {
 public:
  RecessionCalendar() = default;
  explicit RecessionCalendar(std::vector<MonthInterval> intervals);

  bool contains(YearMonth month) const;
  const std::vector<MonthInterval>& intervals() const { return intervals_; }

 private:
  std::vector<MonthInterval> intervals_;
};

enum class RecessionRule { Any, Majority, All };
RecessionRule parse_recession_rule(std::string_view name);

struct SpellRecord {
  YearMonth start;
  int duration = 0;          // months, >= 1
  int event = 1;             // 1 = ended by a non-negative return, 0 = censored
  int recession = 0;         // 0/1
  double price_decline = 0;  // mean of -100 r over the spell, percent
  double interest_rate = 0;  // mean long rate over the spell, percent
};

struct SpellSet {
  std::vector<SpellRecord> spells;
  std::string source_digest;
  std::optional<YearMonth> first_month;
  std::optional<YearMonth> last_month;
  int negative_months = 0;            // months with r < 0
  int recession_negative_months = 0;  // of which inside a recession
  double max_monthly_loss_pct = 0.0;  // max of -100 r
  std::optional<YearMonth> max_loss_month;
};

// --- ingestion --------------------------------------------------------------

PriceSeries load_series(const std::string& path);
PriceSeries parse_series(std::istream& in, const std::string& source_name = "<stream>");

RecessionCalendar load_recessions(const std::string& path);
RecessionCalendar parse_recessions(std::istream& in);

// --- transformation ---------------------------------------------------------

ReturnSeries compute_returns(const PriceSeries& series);

SpellSet extract_spells(const ReturnSeries& returns, const RecessionCalendar& calendar,
                        RecessionRule rule = RecessionRule::Any);

void write_spells_csv(std::ostream& out, const SpellSet& spells);
SpellSet parse_spells_csv(std::istream& in);

// --- descriptive statistics -------------------------------------------------

enum class Grouping { None, Recession, Era, PriceDeclineQuartile, InterestRateQuartile };

struct GroupSummary {
  std::string label;
  int n = 0;
  std::optional<double> mean;      // empty group -> nullopt
  std::optional<double> variance;  // n < 2 -> nullopt
  std::optional<int> min;
  std::optional<int> max;
  std::map<int, int> histogram;  // duration -> count
  std::vector<double> durations;
};

struct DescribeOptions {
  Grouping grouping = Grouping::None;
  YearMonth era_split{1938, 7};  // Era: spells starting before this month form group 1
};

std::vector<GroupSummary> describe_spells(const SpellSet& spells, const DescribeOptions& options);

/// Type-7 (linear interpolation) quartile breakpoints.
std::array<double, 3> quartile_breakpoints(std::vector<double> values);

/// 0-based quartile of `value`; values equal to a breakpoint go to the lower quartile.
int quartile_of(double value, const std::array<double, 3>& breakpoints);

struct WelchResult {
  double t = 0;
  int df = 0;
  double p_two_tail = 1;
  double mean_difference = 0;
};

/// Welch two-sample t-test. Satterthwaite df rounded to the nearest integer.
WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);
WelchResult welch_t_test_from_moments(double mean_a, double var_a, int n_a, double mean_b,
                                      double var_b, int n_b);

/// Relative frequency of each duration from 1 to the longest spell.
std::vector<std::pair<double, double>> duration_frequencies(const SpellSet& spells);

struct CubicFit {
  std::array<double, 4> coefficients{};  // γ0 + γ1 t + γ2 t² + γ3 t³
  double r_squared = 0;
};

CubicFit cubic_trend_fit(const std::vector<std::pair<double, double>>& points);

/// FNV-1a 64-bit digest, hex encoded.
std::string fnv1a64_hex(std::string_view bytes);

}  // namespace hazardlab
