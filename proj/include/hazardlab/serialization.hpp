#pragma once

#include "json.hpp"

#include "hazardlab/diagnostics.hpp"
#include "hazardlab/estimation.hpp"
#include "hazardlab/inference.hpp"

namespace hazardlab {

/// Non-finite values serialize as null.
nlohmann::json to_json(const ModelSpec& spec);
nlohmann::json to_json(const FitResult& fit);
nlohmann::json to_json(const TestResult& test);
nlohmann::json to_json(const ResidualSummary& summary);

/// Rebuilds the AIC of a serialized fit from its stored loglik, k1 and k2.
double aic_from_json(const nlohmann::json& fit);

}  // namespace hazardlab
