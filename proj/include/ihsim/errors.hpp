#pragma once

#include <stdexcept>
#include <string>

namespace ihsim {

/// Invalid configuration or argument. `field()` names the offending input.
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A request that is well-formed but exceeds a runtime guard (e.g. a codebook
/// too large to enumerate).
class GuardError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ihsim
