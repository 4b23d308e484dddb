#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace survey::cli {

enum ExitCode { ok = 0, usage_error = 2, data_error = 3, numerical_error = 4 };

/// Runs the command line; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace survey::cli
