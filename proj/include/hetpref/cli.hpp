#pragma once
// Command-line front end: simulate | emdpo | aggregate | identify | evaluate | sweep-k.
#include <json.hpp>

#include <string>
#include <vector>

namespace hetpref {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitHashMismatch = 3,
  kExitConvergence = 4,
};

/// Built-in defaults; every command reads its section from here unless the
/// config file overrides it.
nlohmann::json default_config();

/// Named presets merged under the user config. "paper_defaults" holds
/// kappa 0.1, 5 EM iterations, 20 MWU iterations and MWU step 0.01.
nlohmann::json preset_config(const std::string& name);

/// Parses a config document (JSON, // comments allowed), applies its preset,
/// and rejects unknown fields. Throws ConfigError.
nlohmann::json resolve_config(const std::string& text);

/// Runs one command; returns the process exit code. args excludes argv[0].
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

}  // namespace hetpref
