#pragma once

#include <iosfwd>

namespace tscm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

/// Entry point shared by the executable and the tests. Subcommands:
/// generate, train, eval, analyze, compare, bench, ablate, equivcheck.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tscm::cli
