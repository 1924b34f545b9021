#pragma once

#include <stdexcept>
#include <string>

namespace wfd {

// Malformed or inconsistent dataset contents.
struct data_error : std::runtime_error {
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable or incompatible model checkpoint.
struct checkpoint_error : std::runtime_error {
  explicit checkpoint_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration values.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace wfd
