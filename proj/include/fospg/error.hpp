#pragma once

#include <stdexcept>
#include <string>

namespace fospg {

/// Invalid user input: bad mesh parameters, unsupported degrees, bad config.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct MeshError : ConfigError {
  using ConfigError::ConfigError;
};

/// Numerical failure: non-SPD assembly, Newton divergence, NaN updates.
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fospg
