#pragma once

#include <stdexcept>
#include <string>

namespace pmising {

/// Caller supplied arguments that violate a documented precondition.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A request the library refuses by policy (e.g. enumeration above the cap).
class RefusedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A Monte Carlo quantity that cannot be formed from the realized draws.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; the message names the offending location.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bound formulas evaluated outside the region where they hold.
class BoundsInapplicable : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace pmising
