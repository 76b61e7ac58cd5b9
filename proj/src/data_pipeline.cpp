#include "hazardlab/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <sstream>

#include <Eigen/Dense>

#include "csv_util.hpp"
#include "hazardlab/special_functions.hpp"

namespace hazardlab {

namespace {

std::string with_line(const std::string& what, int line) {
  return line > 0 ? "line " + std::to_string(line) + ": " + what : what;
}

std::string read_all(std::istream& in) {
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_all(in);
}

// Splits text into lines, numbering from 1; blank lines are kept so numbers stay right.
std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  if (!lines.empty()) lines.front() = detail::strip_bom(lines.front());
  return lines;
}

void expect_header(std::string_view line, const std::vector<std::string_view>& names) {
  const auto fields = detail::split_fields(line);
  bool ok = fields.size() == names.size();
  for (std::size_t i = 0; ok && i < names.size(); ++i) ok = fields[i] == names[i];
  if (!ok) {
    std::string expected;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (i) expected += ',';
      expected += names[i];
    }
    throw DataError("expected header '" + expected + "', got '" + std::string(line) + "'", 1);
  }
}

double field_double(std::string_view s, const char* name, int line) {
  const auto v = detail::to_double(s);
  if (!v || !std::isfinite(*v)) {
    throw DataError(std::string("invalid ") + name + " '" + std::string(s) + "'", line);
  }
  return *v;
}

YearMonth field_month(std::string_view s, int line) {
  try {
    return YearMonth::parse(s);
  } catch (const DataError& e) {
    throw DataError(e.what(), line);
  }
}

GroupSummary labelled(std::string label) {
  GroupSummary g;
  g.label = std::move(label);
  return g;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

}  // namespace

DataError::DataError(const std::string& what, int line)
    : std::runtime_error(with_line(what, line)), line_(line) {}

YearMonth YearMonth::parse(std::string_view text) {
  text = detail::trim(text);
  if (text.size() != 7 || text[4] != '-') {
    throw DataError("invalid month '" + std::string(text) + "', expected YYYY-MM");
  }
  const auto y = detail::to_int(text.substr(0, 4));
  const auto m = detail::to_int(text.substr(5, 2));
  if (!y || !m || *m < 1 || *m > 12) {
    throw DataError("invalid month '" + std::string(text) + "', expected YYYY-MM");
  }
  return {*y, *m};
}

YearMonth YearMonth::from_index(int index) {
  const int year = index >= 0 ? index / 12 : -((-index + 11) / 12);
  return {year, index - year * 12 + 1};
}

std::string YearMonth::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
  return buf;
}

// --- recession calendar -----------------------------------------------------

RecessionCalendar::RecessionCalendar(std::vector<MonthInterval> intervals)
    : intervals_(std::move(intervals)) {
  for (std::size_t i = 0; i < intervals_.size(); ++i) {
    if (intervals_[i].end < intervals_[i].begin) {
      throw DataError("recession interval ends before it begins: " +
                      intervals_[i].begin.to_string() + ".." + intervals_[i].end.to_string());
    }
    if (i > 0 && !(intervals_[i - 1].end < intervals_[i].begin)) {
      throw DataError("recession intervals overlap or are unsorted at " +
                      intervals_[i].begin.to_string());
    }
  }
}

bool RecessionCalendar::contains(YearMonth month) const {
  auto it = std::upper_bound(intervals_.begin(), intervals_.end(), month,
                             [](YearMonth m, const MonthInterval& iv) { return m < iv.begin; });
  if (it == intervals_.begin()) return false;
  --it;
  return month <= it->end;
}

RecessionRule parse_recession_rule(std::string_view name) {
  if (name == "any") return RecessionRule::Any;
  if (name == "majority") return RecessionRule::Majority;
  if (name == "all") return RecessionRule::All;
  throw std::invalid_argument("unknown recession rule '" + std::string(name) +
                              "' (expected any, majority or all)");
}

// --- ingestion --------------------------------------------------------------

PriceSeries parse_series(std::istream& in, const std::string& source_name) {
  const std::string text = read_all(in);
  const auto lines = lines_of(text);
  if (lines.empty()) throw DataError(source_name + ": empty price file");
  expect_header(lines[0], {"date", "real_price", "long_rate_pct"});

  PriceSeries series;
  series.source_digest = fnv1a64_hex(text);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const int line = static_cast<int>(i) + 1;
    if (detail::trim(lines[i]).empty()) continue;
    const auto fields = detail::split_fields(lines[i]);
    if (fields.size() != 3) {
      throw DataError("expected 3 fields, got " + std::to_string(fields.size()), line);
    }
    PriceObservation obs{field_month(fields[0], line), field_double(fields[1], "real_price", line),
                         field_double(fields[2], "long_rate_pct", line)};
    if (!(obs.real_price > 0.0)) {
      throw DataError("non-positive price " + std::string(fields[1]) + " in " +
                          obs.month.to_string(), line);
    }
    if (!series.rows.empty()) {
      const YearMonth prev = series.rows.back().month;
      if (obs.month == prev) throw DataError("duplicate month " + obs.month.to_string(), line);
      if (obs.month < prev) {
        throw DataError("month " + obs.month.to_string() + " out of order after " +
                            prev.to_string(), line);
      }
      if (obs.month != prev.next()) {
        throw DataError("gap in series: missing month " + prev.next().to_string(), line);
      }
    }
    series.rows.push_back(obs);
  }
  if (series.rows.empty()) throw DataError(source_name + ": price file has no observations");
  return series;
}

PriceSeries load_series(const std::string& path) {
  std::istringstream in(read_file(path));
  return parse_series(in, path);
}

RecessionCalendar parse_recessions(std::istream& in) {
  const std::string text = read_all(in);
  const auto lines = lines_of(text);
  if (lines.empty()) throw DataError("empty recession file");
  expect_header(lines[0], {"begin", "end"});
  std::vector<MonthInterval> intervals;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const int line = static_cast<int>(i) + 1;
    if (detail::trim(lines[i]).empty()) continue;
    const auto fields = detail::split_fields(lines[i]);
    if (fields.size() != 2) {
      throw DataError("expected 2 fields, got " + std::to_string(fields.size()), line);
    }
    MonthInterval iv{field_month(fields[0], line), field_month(fields[1], line)};
    if (iv.end < iv.begin) throw DataError("interval ends before it begins", line);
    if (!intervals.empty() && !(intervals.back().end < iv.begin)) {
      throw DataError("interval overlaps or precedes the previous one", line);
    }
    intervals.push_back(iv);
  }
  return RecessionCalendar(std::move(intervals));
}

RecessionCalendar load_recessions(const std::string& path) {
  std::istringstream in(read_file(path));
  return parse_recessions(in);
}

// --- transformation ---------------------------------------------------------

ReturnSeries compute_returns(const PriceSeries& series) {
  if (series.rows.size() < 2) throw DataError("at least two price observations are required");
  ReturnSeries out;
  out.source_digest = series.source_digest;
  out.rows.reserve(series.rows.size() - 1);
  for (std::size_t i = 1; i < series.rows.size(); ++i) {
    const auto& cur = series.rows[i];
    out.rows.push_back({cur.month, std::log(cur.real_price) - std::log(series.rows[i - 1].real_price),
                        cur.long_rate_pct});
  }
  return out;
}

SpellSet extract_spells(const ReturnSeries& returns, const RecessionCalendar& calendar,
                        RecessionRule rule) {
  if (returns.rows.empty()) throw DataError("return series is empty");
  SpellSet set;
  set.source_digest = returns.source_digest;
  set.first_month = returns.rows.front().month;
  set.last_month = returns.rows.back().month;

  const auto& rows = returns.rows;
  std::size_t i = 0;
  while (i < rows.size()) {
    if (!(rows[i].log_return < 0.0)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    double loss = 0.0;
    double rate = 0.0;
    int in_recession = 0;
    while (j < rows.size() && rows[j].log_return < 0.0) {
      const double pct = -100.0 * rows[j].log_return;
      loss += pct;
      rate += rows[j].long_rate_pct;
      if (calendar.contains(rows[j].month)) {
        ++in_recession;
        ++set.recession_negative_months;
      }
      if (pct > set.max_monthly_loss_pct) {
        set.max_monthly_loss_pct = pct;
        set.max_loss_month = rows[j].month;
      }
      ++j;
    }
    const int duration = static_cast<int>(j - i);
    SpellRecord spell;
    spell.start = rows[i].month;
    spell.duration = duration;
    spell.event = j < rows.size() ? 1 : 0;
    switch (rule) {
      case RecessionRule::Any: spell.recession = in_recession > 0; break;
      case RecessionRule::Majority: spell.recession = 2 * in_recession > duration; break;
      case RecessionRule::All: spell.recession = in_recession == duration; break;
    }
    spell.price_decline = loss / duration;
    spell.interest_rate = rate / duration;
    set.negative_months += duration;
    set.spells.push_back(spell);
    i = j;
  }
  return set;
}

void write_spells_csv(std::ostream& out, const SpellSet& spells) {
  out << "start,duration,event,recession,price_decline_pct,interest_rate_pct\n";
  char buf[128];
  for (const auto& s : spells.spells) {
    std::snprintf(buf, sizeof buf, "%s,%d,%d,%d,%.17g,%.17g\n", s.start.to_string().c_str(),
                  s.duration, s.event, s.recession, s.price_decline, s.interest_rate);
    out << buf;
  }
}

SpellSet parse_spells_csv(std::istream& in) {
  const std::string text = read_all(in);
  const auto lines = lines_of(text);
  if (lines.empty()) throw DataError("empty spell file");
  expect_header(lines[0], {"start", "duration", "event", "recession", "price_decline_pct",
                           "interest_rate_pct"});
  SpellSet set;
  set.source_digest = fnv1a64_hex(text);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const int line = static_cast<int>(i) + 1;
    if (detail::trim(lines[i]).empty()) continue;
    const auto f = detail::split_fields(lines[i]);
    if (f.size() != 6) throw DataError("expected 6 fields, got " + std::to_string(f.size()), line);
    SpellRecord s;
    s.start = field_month(f[0], line);
    const auto duration = detail::to_int(f[1]);
    const auto event = detail::to_int(f[2]);
    const auto recession = detail::to_int(f[3]);
    if (!duration || *duration < 1) throw DataError("invalid duration", line);
    if (!event || (*event != 0 && *event != 1)) throw DataError("event must be 0 or 1", line);
    if (!recession || (*recession != 0 && *recession != 1)) {
      throw DataError("recession must be 0 or 1", line);
    }
    s.duration = *duration;
    s.event = *event;
    s.recession = *recession;
    s.price_decline = field_double(f[4], "price_decline_pct", line);
    s.interest_rate = field_double(f[5], "interest_rate_pct", line);
    if (!set.spells.empty() && !(set.spells.back().start < s.start)) {
      throw DataError("spells must be in increasing start order", line);
    }
    set.spells.push_back(s);
    set.negative_months += s.duration;
  }
  if (!set.spells.empty()) {
    set.first_month = set.spells.front().start;
    const auto& last = set.spells.back();
    set.last_month = YearMonth::from_index(last.start.index() + last.duration - 1);
  }
  return set;
}

// --- descriptive statistics -------------------------------------------------

std::array<double, 3> quartile_breakpoints(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("quartile_breakpoints: empty sample");
  std::sort(values.begin(), values.end());
  std::array<double, 3> out{};
  const double n1 = static_cast<double>(values.size() - 1);
  for (int q = 1; q <= 3; ++q) {
    const double h = n1 * q / 4.0;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    out[q - 1] = values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
  }
  return out;
}

int quartile_of(double value, const std::array<double, 3>& breakpoints) {
  int q = 0;
  while (q < 3 && value > breakpoints[q]) ++q;
  return q;
}

std::vector<GroupSummary> describe_spells(const SpellSet& spells, const DescribeOptions& options) {
  if (spells.spells.empty()) throw DataError("no spells to describe");
  std::vector<GroupSummary> groups;
  std::vector<int> group_of(spells.spells.size(), 0);

  auto quartile_groups = [&](auto covariate, const char* name) {
    std::vector<double> v;
    for (const auto& s : spells.spells) v.push_back(covariate(s));
    const auto bp = quartile_breakpoints(v);
    for (int q = 0; q < 4; ++q) groups.push_back(labelled(std::string(name) + " Q" + std::to_string(q + 1)));
    for (std::size_t i = 0; i < v.size(); ++i) group_of[i] = quartile_of(v[i], bp);
  };

  switch (options.grouping) {
    case Grouping::None:
      groups.push_back(labelled("all"));
      break;
    case Grouping::Recession:
      groups.push_back(labelled("recession"));
      groups.push_back(labelled("no recession"));
      for (std::size_t i = 0; i < spells.spells.size(); ++i) {
        group_of[i] = spells.spells[i].recession ? 0 : 1;
      }
      break;
    case Grouping::Era:
      groups.push_back(labelled("before " + options.era_split.to_string()));
      groups.push_back(labelled("from " + options.era_split.to_string()));
      for (std::size_t i = 0; i < spells.spells.size(); ++i) {
        group_of[i] = spells.spells[i].start < options.era_split ? 0 : 1;
      }
      break;
    case Grouping::PriceDeclineQuartile:
      quartile_groups([](const SpellRecord& s) { return s.price_decline; }, "price decline");
      break;
    case Grouping::InterestRateQuartile:
      quartile_groups([](const SpellRecord& s) { return s.interest_rate; }, "interest rate");
      break;
  }

  for (std::size_t i = 0; i < spells.spells.size(); ++i) {
    auto& g = groups[group_of[i]];
    const int d = spells.spells[i].duration;
    g.durations.push_back(d);
    ++g.histogram[d];
  }
  for (auto& g : groups) {
    g.n = static_cast<int>(g.durations.size());
    if (g.n == 0) continue;
    const double m = mean_of(g.durations);
    g.mean = m;
    if (g.n >= 2) g.variance = sample_variance(g.durations, m);
    g.min = g.histogram.begin()->first;
    g.max = g.histogram.rbegin()->first;
  }
  return groups;
}

WelchResult welch_t_test_from_moments(double mean_a, double var_a, int n_a, double mean_b,
                                      double var_b, int n_b) {
  if (n_a < 2 || n_b < 2) throw std::invalid_argument("welch_t_test: each sample needs n >= 2");
  if (!(var_a >= 0.0) || !(var_b >= 0.0)) {
    throw std::invalid_argument("welch_t_test: variances must be non-negative");
  }
  const double sa = var_a / n_a;
  const double sb = var_b / n_b;
  WelchResult r;
  r.mean_difference = mean_a - mean_b;
  if (sa + sb == 0.0) {
    if (r.mean_difference == 0.0) return r;  // identical constant samples
    throw std::invalid_argument("welch_t_test: both samples have zero variance");
  }
  r.t = r.mean_difference / std::sqrt(sa + sb);
  const double df = (sa + sb) * (sa + sb) /
                    (sa * sa / (n_a - 1.0) + sb * sb / (n_b - 1.0));
  r.df = std::max(1, static_cast<int>(std::lround(df)));
  r.p_two_tail = student_t_two_tail(r.t, r.df);
  return r;
}

WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) {
    throw std::invalid_argument("welch_t_test: each sample needs n >= 2");
  }
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  return welch_t_test_from_moments(ma, sample_variance(a, ma), static_cast<int>(a.size()), mb,
                                   sample_variance(b, mb), static_cast<int>(b.size()));
}

std::vector<std::pair<double, double>> duration_frequencies(const SpellSet& spells) {
  if (spells.spells.empty()) return {};
  int longest = 0;
  for (const auto& s : spells.spells) longest = std::max(longest, s.duration);
  std::vector<int> counts(longest + 1, 0);
  for (const auto& s : spells.spells) ++counts[s.duration];
  std::vector<std::pair<double, double>> out;
  const double n = static_cast<double>(spells.spells.size());
  for (int d = 1; d <= longest; ++d) out.emplace_back(d, counts[d] / n);
  return out;
}

CubicFit cubic_trend_fit(const std::vector<std::pair<double, double>>& points) {
  std::vector<double> xs;
  for (const auto& p : points) xs.push_back(p.first);
  std::sort(xs.begin(), xs.end());
  if (std::unique(xs.begin(), xs.end()) - xs.begin() < 5) {
    throw std::invalid_argument("cubic_trend_fit: at least 5 distinct durations are required");
  }
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd X(n, 4);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = points[i].first;
    X(i, 0) = 1.0;
    X(i, 1) = t;
    X(i, 2) = t * t;
    X(i, 3) = t * t * t;
    y(i) = points[i].second;
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < 4) throw std::invalid_argument("cubic_trend_fit: rank-deficient design");
  const Eigen::VectorXd beta = qr.solve(y);
  CubicFit fit;
  for (int j = 0; j < 4; ++j) fit.coefficients[j] = beta(j);
  const double ybar = y.mean();
  const double sst = (y.array() - ybar).square().sum();
  const double sse = (y - X * beta).squaredNorm();
  fit.r_squared = sst > 0.0 ? 1.0 - sse / sst : 1.0;
  return fit;
}

std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace hazardlab
