#pragma once

#include <stdexcept>
#include <string>

namespace outrigger {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  InsufficientLocalData,
  SingularGram,
  TooFewResiduals,
  SingularPenalty,
  EmptyAnnulus,
  SingularJacobian,
  NonConvergence,
  QuadratureFailure,
  InfiniteFisherInformation,
  UnknownName,
  MalformedInput,
};

const char* to_string(ErrorCode code) noexcept;

// Validation errors are raised before any heavy computation; the solver
// codes (SingularGram, EmptyAnnulus, SingularJacobian, NonConvergence, ...)
// come out of the numerics.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  bool is_validation() const noexcept {
    return code_ == ErrorCode::InvalidArgument ||
           code_ == ErrorCode::DimensionMismatch ||
           code_ == ErrorCode::UnknownName ||
           code_ == ErrorCode::MalformedInput ||
           code_ == ErrorCode::InfiniteFisherInformation;
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool ok, const std::string& what,
                    ErrorCode code = ErrorCode::InvalidArgument) {
  if (!ok) fail(code, what);
}

}  // namespace outrigger
