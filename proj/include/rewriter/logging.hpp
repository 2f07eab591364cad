#pragma once

#include <string>
#include <utility>
#include <vector>

namespace rewriter {

// Line-oriented key=value logging to stderr. Verbosity comes from the
// RLAB_LOG environment variable: 0 silences info, 1 (default) prints info,
// 2 adds debug.
int log_verbosity();

void log_kv(int level, const std::string& event,
            const std::vector<std::pair<std::string, std::string>>& fields = {});

std::string fmt_double(double v);

}  // namespace rewriter
