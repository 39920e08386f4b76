#pragma once

#include <stdexcept>
#include <string>

namespace fsir {

// Precondition / contract violations (bad arguments, malformed configs).
// The CLI maps these to exit code 2.
struct ValidationError : std::invalid_argument {
  explicit ValidationError(const std::string& msg) : std::invalid_argument(msg) {}
};

// File-system and format failures. Exit code 3 at the CLI.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised by the sparse solver when the majorizer constant fails the
// convexity condition, before any iteration runs.
struct MajorizerError : ValidationError {
  explicit MajorizerError(const std::string& msg) : ValidationError(msg) {}
};

}  // namespace fsir
