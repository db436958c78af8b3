#pragma once

#include <stdexcept>
#include <string>

namespace salguide {

// Error categories aligned with the CLI exit codes: usage/config errors exit
// with 2, unreadable or malformed data with 3, numeric failures with 4.

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace salguide
