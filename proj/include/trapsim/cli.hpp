#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace trapsim::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { ok = 0, usage_error = 1, data_error = 2, numerical_error = 3 };

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace trapsim::cli
