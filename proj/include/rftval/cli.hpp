#pragma once

#include <iosfwd>

namespace rftval {

// Exit statuses of the command-line tool.
inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 2;
inline constexpr int exit_io = 3;
inline constexpr int exit_numeric = 4;

/// Entry point of `rftval`; subcommands validate-fwe, analyze, simulate.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace rftval
