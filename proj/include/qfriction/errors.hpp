#pragma once

#include <stdexcept>
#include <string>

namespace qfriction {

/// Bad argument to an engine operation (wrong factor kind, mismatched spaces,
/// out-of-range parameter).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input that is formally valid but numerically degenerate, e.g. a
/// wavefunction ratio whose denominator falls below the division floor.
class DegenerateInput : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// A configured size cap would be exceeded.
class ResourceLimit : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Generic numerical breakdown (non-convergence, non-finite values).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qfriction
