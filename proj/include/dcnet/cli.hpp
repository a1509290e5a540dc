#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dcnet::cli {

/// Process exit codes.
inline constexpr int kExitSuccess = 0;
inline constexpr int kExitFailure = 1;  // generation or internal failure
inline constexpr int kExitUsage = 2;    // bad flags, config keys, or input files
inline constexpr int kExitNumerical = 3;

/// Runs one command. `args` excludes the program name, e.g. {"gen", "--n", "10", ...}.
/// Flags may also come from `--config-file PATH` holding `key=value` lines whose
/// keys are long flag names of the chosen command; explicit flags take precedence.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dcnet::cli
