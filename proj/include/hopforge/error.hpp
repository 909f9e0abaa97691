#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hopforge {

enum class ErrorCode {
    NotFound,
    Io,
    InvalidInput,
    Precondition,
    Gateway,        // retryable transport failure, retries exhausted
    CallerError,    // 4xx from an endpoint, never retried
    SchemaViolation,
    Generation,
    Config,
    Usage,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace hopforge
