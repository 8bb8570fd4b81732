#pragma once

#include <string>

#include "cuae/gauss/gaussian.hpp"

#include <json.hpp>

namespace cuae::gauss {

/// JSON layout:
///   {"dim": d, "weights": [...],
///    "components": [{"mean": [...], "cov": [[...], ...]}, ...]}
/// Doubles round-trip losslessly (shortest-representation printing).
nlohmann::json mixture_to_json(const GaussianMixture& m);
GaussianMixture mixture_from_json(const nlohmann::json& j);

void save_mixture(const std::string& path, const GaussianMixture& m);
GaussianMixture load_mixture(const std::string& path);

}  // namespace cuae::gauss
