#pragma once

#include <stdexcept>
#include <string>

namespace tssb {

/// Bad configuration value or unusable output location.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data, including checkpoints.
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A sampler hit a numerical dead end (shrink cap, non-finite density, ...).
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Internal bookkeeping invariant broken. Always a bug.
struct invariant_error : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace tssb
