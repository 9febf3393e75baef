#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace shapetest {

enum class ErrorCode {
  NonpositiveRange,
  TooFewPoints,
  GridMismatch,
  TooSmall,
  IncompatibleCone,
  UnsupportedIntersection,
  SolverFailure,
  NonpositiveWeight,
  DegenerateColumn,
  OutOfRange,
  EmptyData,
  LengthMismatch,
  DimensionMismatch,
  DegenerateTau,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every library failure is reported through this one exception type; callers
// that need to branch (the CLI's exit codes, the study harness) switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace shapetest
