#include "shapetest/error.hpp"

namespace shapetest {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonpositiveRange: return "NonpositiveRange";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::IncompatibleCone: return "IncompatibleCone";
    case ErrorCode::UnsupportedIntersection: return "UnsupportedIntersection";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::NonpositiveWeight: return "NonpositiveWeight";
    case ErrorCode::DegenerateColumn: return "DegenerateColumn";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::EmptyData: return "EmptyData";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateTau: return "DegenerateTau";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace shapetest
