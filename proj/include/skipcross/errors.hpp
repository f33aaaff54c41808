#pragma once

#include <stdexcept>
#include <string>

namespace skipcross {

// Error taxonomy mirrored by the CLI exit codes: usage -> 1, data -> 2,
// numeric -> 3. Everything derives from std::runtime_error so callers that
// do not care can catch one type.

class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public UsageError {
 public:
  explicit ConfigError(const std::string& msg) : UsageError(msg) {}
};

// Bad or missing input data: unreadable files, malformed headers, shape
// mismatches between tensors fed into an operation.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public DataError {
 public:
  explicit ShapeError(const std::string& msg) : DataError(msg) {}
};

// Non-finite losses, failed gradient checks.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace skipcross
