#pragma once

#include <stdexcept>
#include <string>

namespace tgrec {

// Bad configuration key, value or command-line usage.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable or malformed input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A NaN/Inf surfaced in a forward or backward computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tgrec
