#ifndef TREENMT_ERRORS_HPP
#define TREENMT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace treenmt {

// Base class for all toolkit errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user input: config files, CLI arguments, malformed data files.
// Maps to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or infeasible language-tree specification.
class TreeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// File I/O failure (missing file, line-count mismatch, undecodable bytes).
class IoError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Tensor shape mismatch or invalid op usage.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Runtime numeric failure (non-finite loss, NaN in forward pass).
// Maps to exit code 3.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace treenmt

#endif  // TREENMT_ERRORS_HPP
