#pragma once

#include <stdexcept>
#include <string>

namespace sketchdesc {

// Raised when inputs violate an operation's contract (bad arguments, missing
// files, empty data). The CLI maps these to its "failed precondition" exit code.
class precondition_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised for failures that happen while an otherwise valid computation runs
// (non-finite gradients, I/O write failures).
class runtime_failure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw precondition_error(message);
}

}  // namespace sketchdesc
