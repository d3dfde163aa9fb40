// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace kinmerge {

/// Broad failure category. The CLI maps each category to an exit code.
enum class ErrorKind {
  usage,      // bad arguments or configuration shape
  data,       // malformed or incompatible inputs, numeric preconditions
  io,         // filesystem failures
  evaluator,  // external evaluator failed, timed out, or misbehaved
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void throw_data(const std::string& what);
[[noreturn]] void throw_io(const std::string& what);
[[noreturn]] void throw_usage(const std::string& what);
[[noreturn]] void throw_evaluator(const std::string& what);

}  // namespace kinmerge
