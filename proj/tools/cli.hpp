#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace freqmrn::cli {

enum ExitCode : int { kSuccess = 0, kRuntimeFailure = 1, kUsageError = 2 };

/// Runs the `freqmrn` command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace freqmrn::cli
