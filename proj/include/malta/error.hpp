//===-- error.hpp - Error codes shared by all malta modules --------*- C++ -*-===//
//
// Part of the malta project.
//
//===----------------------------------------------------------------------===//

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace malta {

enum class ErrorCode {
  Syntax,
  UnknownField,
  MissingField,
  TypeMismatch,
  UnknownEnum,
  OutOfGrid,
  NonDivisibleFactor,
  CarriedDepBlocksVectorization,
  InvalidKernel,
  UnknownKernel,
  EvalOnUnmapped,
  EmptyCandidateSet,
  InvalidArgument,
  Config,
  SchemaVersion,
  Io,
  Transport,
};

std::string_view to_string(ErrorCode code);

/// Hard failure of an operation. Domain outcomes that callers are expected to
/// act on (structural violations, mapping failures) are returned as values.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

} // namespace malta
