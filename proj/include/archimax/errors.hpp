#pragma once

#include <stdexcept>
#include <string>

namespace archimax {

// Exit codes used by the command-line front end.
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitCapability = 4;

// Bad input: out-of-domain parameters, malformed configs, shape mismatches.
// `code` is a stable machine-readable tag, `pointer` a JSON pointer into the
// offending document (empty when the error did not come from a document).
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string code, const std::string& what, std::string pointer = {})
      : std::invalid_argument(what), code_(std::move(code)), pointer_(std::move(pointer)) {}

  [[nodiscard]] const std::string& code() const noexcept { return code_; }
  [[nodiscard]] const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string code_;
  std::string pointer_;
};

// Root finding, bracketing or quadrature did not produce a usable number.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The request is well formed but outside what is implemented
// (derivative order too high, boundary tail class, K too large, ...).
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void require(bool ok, const char* code, const std::string& what) {
  if (!ok) throw ValidationError(code, what);
}
}  // namespace detail

}  // namespace archimax
