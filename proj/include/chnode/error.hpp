#pragma once

#include <stdexcept>
#include <string>

namespace chnode {

enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  non_finite,
  not_symmetric,
  epsilon_too_large,
  io,
  format,
  numerical,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::dimension_mismatch: return "dimension mismatch";
    case ErrorCode::non_finite: return "non-finite value";
    case ErrorCode::not_symmetric: return "matrix not symmetric";
    case ErrorCode::epsilon_too_large: return "epsilon too large for alpha";
    case ErrorCode::io: return "i/o error";
    case ErrorCode::format: return "format error";
    case ErrorCode::numerical: return "numerical failure";
  }
  return "unknown";
}

/// Every failure in the library surfaces as this exception; `code()` lets
/// callers (the CLI in particular) map failures to stable exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace chnode
