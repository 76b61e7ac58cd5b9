#include "hazardlab/simulation.hpp"

#include <charconv>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <random>
#include <stdexcept>

namespace hazardlab {

std::uint64_t seed_from_env(std::uint64_t fallback) {
  const char* text = std::getenv("HAZARDLAB_SEED");
  if (!text || !*text) return fallback;
  std::uint64_t seed = 0;
  const char* end = text + std::char_traits<char>::length(text);
  const auto [ptr, ec] = std::from_chars(text, end, seed);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument("HAZARDLAB_SEED must be a non-negative integer");
  }
  return seed;
}

std::string synthetic_prices_csv(int months, std::uint64_t seed, YearMonth start) {
  if (months < 2) throw std::invalid_argument("synthetic series needs at least 2 months");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto normal = [&] {
    // Box-Muller keeps the stream identical across standard libraries.
    const double u1 = 1.0 - unif(rng);
    const double u2 = unif(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  };
  std::string out = "date,real_price,long_rate_pct\n";
  double log_price = std::log(100.0);
  double rate = 4.5;
  bool bear = false;
  char buf[96];
  YearMonth m = start;
  for (int i = 0; i < months; ++i) {
    if (i > 0) {
      if (unif(rng) < (bear ? 0.12 : 0.03)) bear = !bear;
      const double mu = bear ? -0.012 : 0.006;
      const double sd = bear ? 0.055 : 0.035;
      log_price += mu + sd * normal();
      rate = std::clamp(rate + 0.08 * normal() + 0.01 * (4.5 - rate), 0.5, 15.0);
    }
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.4f\n", m.to_string().c_str(), std::exp(log_price),
                  rate);
    out += buf;
    m = m.next();
  }
  return out;
}

}  // namespace hazardlab
