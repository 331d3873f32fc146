#pragma once

#include <string>
#include <vector>

namespace hifi::cli {

/// Entry point for the hifiyolo command line (argv without the program
/// name). Returns the process exit code: 0 success, 1 user error, 2
/// internal error.
int run(const std::vector<std::string>& args);

}  // namespace hifi::cli
