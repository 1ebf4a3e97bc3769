#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dldmd/dynamics.hpp"
#include "dldmd/training.hpp"

namespace dldmd::cli {

/// Effective settings of one invocation after preset, config file, --set
/// overrides and dedicated flags have been applied, in that order.
struct RunConfig {
  std::string command;
  dynamics::System system = dynamics::System::pendulum;
  dynamics::SystemSpec spec = dynamics::SystemSpec::defaults(dynamics::System::pendulum);
  training::Preset preset = training::Preset::desk_scale;
  training::HyperParams hyper;
  dynamics::SplitCounts counts;
  std::filesystem::path out = "out";
  std::filesystem::path data;        // defaults to <out>/data
  std::filesystem::path checkpoint;  // defaults to <out>/checkpoint.bin
  std::uint64_t seed = 0;
  int threads = 1;
  std::size_t traj = 0;    // test trajectory used by predict / spectra
  double band = 0.01;
  std::string baseline;    // "" or "dmd"

  /// key = value lines that re-drive the same run through --config.
  std::string echo() const;
};

/// Raw key/value assignments in the order they were given.
using Assignments = std::vector<std::pair<std::string, std::string>>;

/// Parses "key = value" lines; '#' starts a comment. Throws ConfigError.
Assignments parse_config_text(const std::string& text, const std::string& origin);
Assignments read_config_file(const std::filesystem::path& file);
/// Splits "key=value". Throws ConfigError.
std::pair<std::string, std::string> parse_assignment(const std::string& kv);

/// Documented keys, in echo order.
const std::vector<std::string>& known_keys();

/// Builds the effective config. `system` and `preset` are resolved first
/// (they select the defaults) and the remaining assignments are applied in
/// order. Throws ConfigError for unknown keys or malformed values.
RunConfig resolve(const std::string& command, const Assignments& assignments);

}  // namespace dldmd::cli
