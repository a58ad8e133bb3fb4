#pragma once

#include <stdexcept>
#include <string>

namespace racelab {

// Malformed input text (track file, demo file, config file, parameter file).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input parsed but violates a domain invariant. The message names the invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke an operation's precondition (e.g. stepping a terminated episode).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Numerical or runtime failure during training or deployment.
class TrainingFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace racelab
