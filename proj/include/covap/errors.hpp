#pragma once

#include <stdexcept>
#include <string>

namespace covap {

// Base class for all library errors so callers can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad arguments or malformed input data (models, configs, payloads).
struct InvalidInput : Error {
  using Error::Error;
};

// Compressor state does not match the gradient layout it is applied to.
struct InvalidState : Error {
  using Error::Error;
};

// Ratio with a zero denominator (e.g. CCR with zero compute time).
struct UndefinedRatio : Error {
  using Error::Error;
};

// A distributed profile is missing one or more worker traces.
struct IncompleteProfile : Error {
  using Error::Error;
};

// Configuration file problems, with a field path in the message.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace covap
