#pragma once

#include <string>
#include <vector>

namespace gall {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2, kInfeasible = 3 };

int cli_main(int argc, const char* const* argv);
/// `args` excludes the program name.
int cli_main(const std::vector<std::string>& args);

}  // namespace gall
