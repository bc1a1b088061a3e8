#pragma once

#include "stockchain/config.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace stockchain::service {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `stockchain` tool, callable in-process. Failures print a
// single JSON line {"error", "message"} on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const EnvLookup& env = process_env());

}  // namespace stockchain::service
