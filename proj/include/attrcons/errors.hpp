#pragma once

#include <stdexcept>
#include <string>

namespace attrcons {

/// Bad flags, missing config keys, unreadable config files. CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data. CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Correlation requested on fewer than two points or a constant series.
class UndefinedCorrelation : public DataError {
 public:
  using DataError::DataError;
};

/// An internal invariant failed (solver certificate, iteration cap). CLI exit code 3.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace attrcons
