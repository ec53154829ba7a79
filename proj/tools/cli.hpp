#pragma once

#include <ostream>

namespace protoset::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;     // bad flags, config or domain errors
inline constexpr int kExitInternal = 2;  // numeric blow-ups and unexpected failures

/// Entry point of the `protoset` tool. Subcommands: gen-data, train, eval,
/// partition, grad-check, bench.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace protoset::cli
