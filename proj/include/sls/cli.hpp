#pragma once

// Command-line entry points; implemented in src/cli.cpp so tests can invoke
// subcommands without spawning a process.

#include <string>
#include <vector>

namespace sls::cli {

// Exit codes shared by all subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitConfig = 2;      // unreadable/invalid configuration or artifact
inline constexpr int kExitInfeasible = 3;  // synthesis reported infeasibility
inline constexpr int kExitViolation = 4;   // verification found a negative slack

int run(const std::vector<std::string>& args);

}  // namespace sls::cli
