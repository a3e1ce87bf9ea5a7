#pragma once

#include <iosfwd>

namespace ts3 {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Entry point of the `ts3` tool. Subcommands: ingest, train, summarize,
/// index, search, eval-sum, eval-search, tokenize, tree. Returns 0 on
/// success, 1 on usage errors, 2 on data errors; diagnostics go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ts3
