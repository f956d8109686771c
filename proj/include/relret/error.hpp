#pragma once

#include <stdexcept>
#include <string>

namespace relret {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input files (bad syntax, wrong field counts).
struct ParseError : Error {
  using Error::Error;
};

// Structurally valid input that violates a contract (dimension mismatch,
// duplicate ids, incompatible artifacts).
struct ValidationError : Error {
  using Error::Error;
};

// Unusable configuration (empty vocabulary, zero embedding coverage,
// out-of-range hyperparameters).
struct ConfigError : Error {
  using Error::Error;
};

// Failures surfaced while optimizing (non-finite gradients, NaN loss).
struct TrainingError : Error {
  using Error::Error;
};

}  // namespace relret
