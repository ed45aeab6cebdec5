#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace ckprobe {

inline constexpr std::string_view kToolName = "ckprobe";
inline constexpr std::string_view kToolVersion = "0.1.0";

// Exit statuses of execute_command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // input or runtime error
inline constexpr int kExitUsage = 2;    // bad arguments or configuration

/// Runs one subcommand. `args` excludes the program name. Diagnostics go to
/// `err`, human-readable summaries to `out`; artifacts and a manifest.json are
/// written to the --out directory only after the whole command succeeded.
int execute_command(const std::vector<std::string>& args, std::ostream& out,
                    std::ostream& err);

}  // namespace ckprobe
