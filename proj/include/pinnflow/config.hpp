#pragma once

// Sectioned key-value experiment files and the built-in presets.
//
//   preset = rectangle-scaled        ; optional, before any section
//   [domain]        type, final_time, time_step, length, height,
//                   cross_radius, curvature_radius, stenosis_*
//   [flow]          density, viscosity, u_max
//   [network]       hidden_layers, width
//   [training]      variant, residual_form, seed, beta, *_points,
//                   batch_size, adam_*, lbfgs_*, line_search_*, tolerances
//   [decomposition] subdomains, interface_points, gamma, delta
//   [output]        prediction_*_points, snapshot_times
//
// Keys left out keep the preset's (or the built-in default) value.

#include "pinnflow/trainer.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pinnflow {

/// Throws configuration for a name that is not a preset.
ExperimentConfig preset_config(std::string_view name);
std::vector<std::string> preset_names();

/// Parse errors carry the line number, value errors the key name; unknown
/// keys are rejected. The result is validated.
ExperimentConfig parse_config_text(const std::string& text, const std::string& source = "<config>");
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Writes every key, so the output parses back to an equal configuration.
std::string serialize_config(const ExperimentConfig& config);

}  // namespace pinnflow
