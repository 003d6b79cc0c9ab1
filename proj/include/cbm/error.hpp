#pragma once

#include <stdexcept>
#include <string>

namespace cbm {

enum class ErrorKind {
  InvalidInput,  // malformed image or argument
  InvalidGrid,   // image dimensions not divisible by the patch grid
  InvalidPlan,   // mask plan indices out of range
  Index,         // epoch index out of range
  Config,        // configuration validation failure
  Io,            // file system or codec failure
  Divergence,    // non-finite loss or parameters during training
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::InvalidGrid: return "invalid grid";
    case ErrorKind::InvalidPlan: return "invalid plan";
    case ErrorKind::Index: return "index error";
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Divergence: return "divergence";
  }
  return "error";
}

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

/// Process exit code for an error category: 2 config, 3 divergence, 4 I/O.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Divergence: return 3;
    case ErrorKind::Io: return 4;
    default: return 2;
  }
}

}  // namespace cbm
