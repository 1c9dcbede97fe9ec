#pragma once

#include <ostream>

namespace rbi::cli {

// Exit codes: 0 success, 1 runtime or protocol error, 2 usage or parse error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rbi::cli
