#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gamessl::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kCheckFailed = 1;
inline constexpr int kUsage = 2;
inline constexpr int kNumerical = 3;

// Runs one command line (args excludes the program name) and returns the
// exit code. Output goes to out, diagnostics to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gamessl::cli
