// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace kinmerge {

struct ProcessResult {
  int exit_code = -1;  // -1 when killed by a signal or timed out
  int signal = 0;
  bool timed_out = false;
  std::string out;
  std::string err;
};

/// Runs `command` through /bin/sh -c with stdin closed, capturing both output
/// streams. A process still running after `timeout` is killed (its whole
/// process group) and reported as timed out.
ProcessResult run_shell(const std::string& command, std::chrono::milliseconds timeout);

/// Wraps `s` in single quotes for /bin/sh.
std::string shell_quote(std::string_view s);

}  // namespace kinmerge
