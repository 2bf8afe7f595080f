#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace onh {

/// Runs one subcommand. `args` excludes the program name. Returns 0 on
/// success, 1 on a runtime error and 2 on a usage or config error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace onh
