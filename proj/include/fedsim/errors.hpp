#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

// Invalid user-supplied configuration: bad spec fields, unknown config keys,
// violated parameter constraints.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated call contract between components: layout mismatch, empty input
// where a nonempty one is required, non-finite values where finite ones are
// guaranteed.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fedsim
