#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flowscope {

/// Failure categories surfaced by the library. The CLI prints the name of the
/// code verbatim, so renaming an enumerator is a user-visible change.
enum class ErrorCode {
  BadMagic,
  Truncated,
  UnsupportedLinkType,
  MalformedHeader,
  InvalidTau,
  SeriesTooShort,
  DegenerateSeries,
  BadAxes,
  BadBounds,
  IncompatibleHistograms,
  OutOfOrder,
  EmptyPlan,
  UnknownKind,
  WriteFailure,
  InvalidArgument,
  IoError,
  ParseError,
};

std::string_view error_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_name(code_); }

 private:
  ErrorCode code_;
};

}  // namespace flowscope
