#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bpfa {

/// Coarse failure class, surfaced by the CLI as a machine-readable tag and
/// exit code.
enum class ErrorKind {
  Shape,         // tensor shape or layer wiring disagreement
  Numeric,       // NaN/Inf, zero-norm, divergence
  Precondition,  // caller violated an operation contract
  Config,        // invalid or incomplete configuration
  Io,            // file could not be opened, read or written
  Format,        // file content malformed, truncated or wrong version
  Quality,       // a trained model misses its acceptance floor
};

std::string_view to_string(ErrorKind kind);
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace bpfa
