#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace exnorm {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitNumeric = 3 };

/// Entry point of the `exnorm` tool: subcommands train, gradcheck, count and
/// ratios. Output and diagnostics go to the given streams.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Convenience overload; args exclude the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Reads `key = value` lines ('#' starts a comment) and appends `--key value`
/// to `args` for every key not already given on the command line. Boolean
/// values true/false add or omit a bare `--key` flag.
std::vector<std::string> merge_config_file(const std::vector<std::string>& args, const std::string& path);

}  // namespace exnorm
