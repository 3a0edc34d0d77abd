#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fabsched {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
/// Invalid scenario, bad arguments or an unknown dispatcher name.
inline constexpr int kExitValidation = 2;

/// Runs one `fabsched` command line (program name excluded) and returns its exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fabsched
