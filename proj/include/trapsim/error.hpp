#pragma once

#include <stdexcept>
#include <string>

namespace trapsim {

// Bad input data (malformed files, unidentifiable fits, insufficient samples).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical procedure could not produce a result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or unknown configuration keys/values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace trapsim
