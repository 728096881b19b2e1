#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cbp::cli {

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kIoOrValidation = 1, kConfig = 2 };

/// Subcommands: generate, prune, eval, report. Exit codes: 0 success,
/// 1 I/O or validation failure, 2 configuration error.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cbp::cli
