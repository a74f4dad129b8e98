#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dispatch::cli {

enum ExitCode : int {
  kOk = 0,
  kInternalError = 1,
  kInputError = 2,
  kUnsolvable = 3,
};

/// Runs one command line (args[0] is the program name) and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dispatch::cli
