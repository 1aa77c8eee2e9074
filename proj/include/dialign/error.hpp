#pragma once

#include <stdexcept>
#include <string>

namespace dialign {

/// Validation errors are caused by bad inputs (exit code 1); runtime errors by
/// failures while processing otherwise valid inputs (exit code 2).
enum class ErrorKind { kValidation, kRuntime };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept {
    return kind_ == ErrorKind::kValidation ? 1 : 2;
  }

 private:
  ErrorKind kind_;
};

inline Error validation_error(const std::string& what) {
  return Error(ErrorKind::kValidation, what);
}

inline Error runtime_error(const std::string& what) {
  return Error(ErrorKind::kRuntime, what);
}

}  // namespace dialign
