#pragma once

#include <ostream>

#include "evgs/config.hpp"

namespace evgs {

// Subcommand bodies. Each returns a process exit code (0 success, 1 runtime
// failure) and throws ConfigError for usage-level problems, which run_cli
// maps to exit code 2.
int cmd_simulate(const Config& config, std::ostream& out);
int cmd_train(const Config& config, std::ostream& out);
int cmd_render(const Config& config, std::ostream& out);
int cmd_eval(const Config& config, std::ostream& out);

// Full argv handling: `evgs simulate|train|render|eval --config <path>
// [--set key=value ...]`. Exit codes: 0 success, 1 runtime failure, 2
// usage or configuration error.
int run_cli(int argc, const char* const argv[], std::ostream& out, std::ostream& err);

}  // namespace evgs
