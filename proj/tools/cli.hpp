#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mmres::cli {

/// Exit codes.
inline constexpr int exit_ok = 0;
inline constexpr int exit_io = 1;        // I/O, parse or configuration error
inline constexpr int exit_numerical = 2; // fit failure or singular numerics

/// Runs the command line `args` (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace mmres::cli
