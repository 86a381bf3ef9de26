#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ddmres {

enum class ErrorCode {
  InvalidArgument,
  InvalidInterval,
  OutOfDomain,
  AmbiguousFace,
  CycleDetected,
  InconsistentTrace,
  DegreeTooLow,
  NonconformingTestSpace,
  SingularGram,
  AssumptionViolated,
  AssumptionUnavailable,
  SingularNormalization,
  BetaVanishesInsideElement,
  SingularSystem,
  NewtonDiverged,
  DegenerateFit,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Validation errors map to CLI exit code 2, solver failures to 3.
bool is_solver_failure(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace ddmres
