#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace envkit::cli {

/// Exit statuses of the batch front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;      ///< numerical or runtime failure, JSON error report on stdout
inline constexpr int kExitCheckFailed = 2; ///< computation finished, a mathematical check failed
inline constexpr int kExitUsage = 64;     ///< malformed command line or configuration

/// Runs one job. args excludes the program name. Artifacts without --out go to `out`;
/// usage messages and log lines go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// argv entry point used by the envkit executable.
int run(int argc, char** argv);

} // namespace envkit::cli
