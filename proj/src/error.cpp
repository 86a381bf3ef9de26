#include "ddmres/error.hpp"

namespace ddmres {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidInterval: return "InvalidInterval";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::AmbiguousFace: return "AmbiguousFace";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::InconsistentTrace: return "InconsistentTrace";
    case ErrorCode::DegreeTooLow: return "DegreeTooLow";
    case ErrorCode::NonconformingTestSpace: return "NonconformingTestSpace";
    case ErrorCode::SingularGram: return "SingularGram";
    case ErrorCode::AssumptionViolated: return "AssumptionViolated";
    case ErrorCode::AssumptionUnavailable: return "AssumptionUnavailable";
    case ErrorCode::SingularNormalization: return "SingularNormalization";
    case ErrorCode::BetaVanishesInsideElement: return "BetaVanishesInsideElement";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NewtonDiverged: return "NewtonDiverged";
    case ErrorCode::DegenerateFit: return "DegenerateFit";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

bool is_solver_failure(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::SingularGram:
    case ErrorCode::SingularNormalization:
    case ErrorCode::SingularSystem:
    case ErrorCode::NewtonDiverged:
      return true;
    default:
      return false;
  }
}

}  // namespace ddmres
