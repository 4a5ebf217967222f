#include "flowscope/error.hpp"

namespace flowscope {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::UnsupportedLinkType: return "UnsupportedLinkType";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::InvalidTau: return "InvalidTau";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::DegenerateSeries: return "DegenerateSeries";
    case ErrorCode::BadAxes: return "BadAxes";
    case ErrorCode::BadBounds: return "BadBounds";
    case ErrorCode::IncompatibleHistograms: return "IncompatibleHistograms";
    case ErrorCode::OutOfOrder: return "OutOfOrder";
    case ErrorCode::EmptyPlan: return "EmptyPlan";
    case ErrorCode::UnknownKind: return "UnknownKind";
    case ErrorCode::WriteFailure: return "WriteFailure";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

}  // namespace flowscope
