#pragma once

#include <iosfwd>

namespace fedsim::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kMissingArtifacts = 3;
inline constexpr int kRuntimeError = 1;

// `fedsim run|report|generate-data ...`; output goes to the given streams.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fedsim::cli
