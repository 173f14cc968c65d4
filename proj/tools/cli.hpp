#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace unisae::cli {

// Runs one invocation; `args` excludes the program name. Returns 0 on
// success, 1 on user error, 2 on internal error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace unisae::cli
