#pragma once

#include "elte/sim.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace elte {

/// Bad or unreadable configuration. The message names the file and the
/// offending field.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Scenario files are JSON objects; unknown keys anywhere are rejected.
/// Relative CSV paths resolve against `base_dir`.
ScenarioConfig parse_scenario(const std::string& text, const std::filesystem::path& base_dir = {},
                              const std::string& origin = "<scenario>");
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Sweep manifest: named regimes pointing at scenario files, methods, seeds.
SweepPlan parse_sweep(const std::string& text, const std::filesystem::path& base_dir = {},
                      const std::string& origin = "<sweep>");
SweepPlan load_sweep(const std::filesystem::path& path);

Method parse_method(const std::string& name);

} // namespace elte
