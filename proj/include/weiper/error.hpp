#ifndef WEIPER_ERROR_HPP_
#define WEIPER_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace weiper {

// Malformed input data: bad files, shape mismatches, non-finite values.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration or hyperparameters supplied by the caller.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace weiper

#endif  // WEIPER_ERROR_HPP_
