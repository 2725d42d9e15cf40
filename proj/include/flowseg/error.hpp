#pragma once

#include <stdexcept>
#include <string>

namespace flowseg {

/// Invalid or unknown configuration values. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A stage or command ran before something it depends on. CLI exit code 3.
class PrerequisiteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// On-disk data is missing, truncated or inconsistent. CLI exit code 4.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace flowseg
