#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace changelens {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

// Runs one CLI invocation. `args` excludes the program name. Domain failures
// print {code, message, detail} as JSON on `err` and return 1; usage errors
// print the usage text and return 2.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace changelens
