#pragma once

#include <iosfwd>

namespace driftkd::cli {

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kDataError = 2, kRunFailure = 3 };

/// Entry point of the `driftkd` command-line tool. Output goes to `out`,
/// diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace driftkd::cli
