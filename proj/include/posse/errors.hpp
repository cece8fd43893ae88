// Copyright 2026 The posse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace posse {

// Base for everything thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

// Bad configuration, bad CLI usage, malformed files, shape mismatches.
// The CLI maps these to exit code 1.
class UserError : public Error {
 public:
  explicit UserError(const std::string &msg) : Error(msg) {}
};

class ConfigError : public UserError {
 public:
  explicit ConfigError(const std::string &msg) : UserError(msg) {}
};

class IoError : public UserError {
 public:
  explicit IoError(const std::string &msg) : UserError(msg) {}
};

class ShapeError : public UserError {
 public:
  explicit ShapeError(const std::string &msg) : UserError(msg) {}
};

// Numerical failure (NaN loss, failed gradient check). CLI exit code 2.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string &msg) : Error(msg) {}
};

inline void require(bool cond, const std::string &msg) {
  if (!cond) throw UserError(msg);
}

inline void require_shape(bool cond, const std::string &msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace posse
