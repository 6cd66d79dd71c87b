#pragma once

#include <iosfwd>

namespace fieldcast::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Parses arguments and runs one subcommand. Diagnostics go to `err`,
// regular output to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fieldcast::cli
