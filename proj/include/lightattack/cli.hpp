#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lightattack {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitSuccess = 0,
  kExitUsage = 2,
  kExitAttackFailed = 3,  // run completed, label not flipped
  kExitIo = 10,           // unreadable or malformed input, failed writes
  kExitProvider = 11,     // provider unreachable or protocol violation
  kExitNumerical = 12,
  kExitInternal = 13,
};

/// Runs one invocation. `args` excludes the program name. The machine-readable
/// summary goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lightattack
