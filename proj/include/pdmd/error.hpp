#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pdmd {

/// Machine-parseable failure category; the CLI prints these verbatim.
enum class ErrorCode {
  validation,
  numerical,
  io,
  config,
  usage,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation: return "E_VALIDATION";
    case ErrorCode::numerical: return "E_NUMERICAL";
    case ErrorCode::io: return "E_IO";
    case ErrorCode::config: return "E_CONFIG";
    case ErrorCode::usage: return "E_USAGE";
  }
  return "E_UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorCode::validation, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorCode::numerical, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::io, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCode::config, what) {}
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace detail
}  // namespace pdmd
