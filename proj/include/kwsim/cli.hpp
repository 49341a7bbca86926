#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kwsim {

/// Exit statuses of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitSimulation = 3, kExitIo = 4 };

/// Runs the `kwsim` command line. `args` excludes the program name. Output
/// goes to `out`, diagnostics to `err`. Never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Output directory: --out if given, else $KWSIM_OUT_DIR, else "kwsim-out".
std::string resolve_out_dir(const std::string& flag);

}  // namespace kwsim
