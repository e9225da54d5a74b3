#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kinfit::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int {
    exit_ok = 0,
    exit_usage = 2,        // bad arguments or unusable input
    exit_integration = 3,  // integration failure
    exit_no_convergence = 4,
};

/// Runs one command; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kinfit::cli
