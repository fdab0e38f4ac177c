#pragma once

#include <stdexcept>
#include <string>

namespace nstab {

/// Input outside an operation's documented domain.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The supplied instance violates a premise of the bound being applied.
class PremiseFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values, non-convergence and similar numerical breakdowns.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument(msg);
}
}  // namespace detail

}  // namespace nstab
