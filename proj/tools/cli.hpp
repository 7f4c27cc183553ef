#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace czforge::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kIo = 3 };

/// Runs the command line `args` (without the program name). Summaries go to
/// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace czforge::cli
