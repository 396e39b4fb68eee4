#pragma once

#include <stdexcept>
#include <string>

namespace ctr {

// Error categories; the CLI maps them to exit codes (config=2, data=3, internal=4).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InternalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ctr
