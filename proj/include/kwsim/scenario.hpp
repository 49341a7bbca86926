#pragma once

#include <string>

#include <json.hpp>

#include "kwsim/simulator.hpp"

namespace kwsim {

/// Scenario document <-> SimConfig. Unknown keys are rejected; every error is
/// a ConfigError whose path names the offending field. Relative workflow file
/// paths are resolved against `base_dir`.
SimConfig parse_scenario(const nlohmann::json& doc, const std::string& base_dir = "");
SimConfig load_scenario_file(const std::string& path);

/// Canonical document for a config; parse_scenario(scenario_to_json(c))
/// reproduces c.
nlohmann::json scenario_to_json(const SimConfig& config);

}  // namespace kwsim
