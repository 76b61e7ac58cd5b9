#pragma once

#include <cstdint>
#include <string>

#include "hazardlab/data_pipeline.hpp"

namespace hazardlab {

/// Seed from the HAZARDLAB_SEED environment variable, or `fallback` when it
/// is unset. Throws std::invalid_argument when it is set but not an integer.
std::uint64_t seed_from_env(std::uint64_t fallback = 20160601);

/// Monthly price file (date,real_price,long_rate_pct) from a regime-switching
/// random walk. Identical seeds give identical bytes.
std::string synthetic_prices_csv(int months, std::uint64_t seed, YearMonth start = {1871, 1});

}  // namespace hazardlab
