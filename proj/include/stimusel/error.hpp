#pragma once

#include <stdexcept>
#include <string>

namespace stimusel {

/// Base error for all toolkit failures. Messages carry enough context
/// (offending filename, dimension, key) to be actionable from a CLI.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
};

}  // namespace stimusel
