#pragma once

#include <stdexcept>
#include <string>

namespace pathsentry {

// Invalid configuration or command-line usage (CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (CLI exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure talking to an embedding provider (CLI exit code 3).
class ProviderError : public std::runtime_error {
 public:
  enum class Kind { kTimeout, kTransport, kStatus, kMalformed, kDimMismatch, kOther };

  ProviderError(Kind kind, bool retryable, const std::string& what)
      : std::runtime_error(what), kind_(kind), retryable_(retryable) {}

  Kind kind() const { return kind_; }
  bool retryable() const { return retryable_; }

 private:
  Kind kind_;
  bool retryable_;
};

}  // namespace pathsentry
