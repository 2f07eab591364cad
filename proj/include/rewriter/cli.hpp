#pragma once

#include <string>
#include <vector>

namespace rewriter {

// Entry point behind the rlab binary; `args` excludes the program name.
// Returns 0 on success, 1 on usage errors, 2 on data errors.
int run_cli(const std::vector<std::string>& args);

}  // namespace rewriter
