#pragma once

#include <stdexcept>
#include <string>

namespace modelmix {

// Precondition or contract violation. Maps to CLI exit code 1.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical routine failed to reach its accuracy target. Maps to CLI exit
// code 2. Carries the error estimate actually achieved.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double achieved_error)
      : std::runtime_error(what), achieved_error_(achieved_error) {}

  double achieved_error() const { return achieved_error_; }

 private:
  double achieved_error_;
};

}  // namespace modelmix
