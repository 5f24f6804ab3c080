#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lagds::cli {

enum ExitCode { kOk = 0, kUsage = 1, kRuntime = 2, kDivergence = 3 };

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lagds::cli
