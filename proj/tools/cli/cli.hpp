#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cvault::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kValidation = 2,
  kIntegrity = 3,
  kLifecycle = 4,
};

// Runs one command line (args excludes the program name). Human-readable
// text goes to `out`; with --json the JSON result goes to `out` and the
// human text to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cvault::cli
