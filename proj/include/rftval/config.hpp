#pragma once

// Run configuration files: a small TOML subset (tables, scalars, flat
// arrays, comments) mapped onto ExperimentConfig plus simulate settings.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rftval/harness.hpp"

namespace rftval {

enum class VolumeFormat { raw, nii, both };

struct SimulateConfig {
  std::size_t n_subjects = 1;
  double smoothing_mm = 8.0;
  RegressorLabel regressor = RegressorLabel::B1;
  double signal_amplitude = 0.0;
  VolumeFormat format = VolumeFormat::nii;
};

struct RunConfig {
  ExperimentConfig experiment;
  SimulateConfig simulate;
};

/// Parses config text. Errors are config_error with `<source>:<line>:` prefixes.
RunConfig parse_config(std::string_view text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Applies one `KEY=VALUE` override. KEY is a dotted path (`data.ar1`) or a
/// leaf name that is unique across tables (`n_realizations`).
void apply_override(RunConfig& config, const std::string& assignment);

/// Every accepted dotted key, in file order.
std::vector<std::string> config_keys();

/// The resolved configuration written back as config text.
std::string to_config_text(const RunConfig& config);

}  // namespace rftval
