// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace kinmerge {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitEvaluator = 3,
};

/// Entry point of the `kinmerge` tool; output goes to `out`, diagnostics to
/// `err`.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kinmerge
