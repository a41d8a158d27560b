#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "mveq/market.hpp"

namespace mveq {

/// Reads a scenario JSON file. Defaults: mode = recombining, delta = 1e-6,
/// perturbation.m = 1, tolerances {1e-10, 1e-8, 0.05}. The coefficients are
/// evaluated on the lattice so hypothesis violations surface here.
/// Throws ParseError whose message starts with the offending key path.
Scenario parse_scenario(const std::filesystem::path& path);

/// Same as parse_scenario for an in-memory document.
Scenario parse_scenario_text(std::string_view text);

/// Serializes a scenario back to the file schema (compact JSON text).
std::string scenario_to_json_text(const Scenario& scenario);

}  // namespace mveq
