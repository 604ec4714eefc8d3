#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ppgfusion {

/// Exit statuses of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitPartial = 1, kExitUsage = 2, kExitNumeric = 3 };

/// Runs one subcommand. `args` excludes the program name. Tables go to `out`,
/// diagnostics and progress to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ppgfusion
