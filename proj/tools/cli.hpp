#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace malta::cli {

/// Exit status contract of the malta command.
enum Exit : int {
  kOk = 0,
  kInternal = 1, // unexpected failure
  kConfig = 2,   // bad flags, unreadable or malformed input files
  kDomain = 3,   // the input was fine but the answer is negative
};

/// Runs one command line (without the program name). Machine output goes to
/// `out`, diagnostics to `err`; logging goes to stderr.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace malta::cli
