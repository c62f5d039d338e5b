#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace deconfound::cli {

/// Exit codes of the deconfound-lab tool.
enum ExitCode : int {
  kOk = 0,
  kValidation = 2,
  kIo = 3,
  kNumerical = 4,
};

/// Runs the tool with argv-style arguments (args[0] is the program name).
/// Normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace deconfound::cli
