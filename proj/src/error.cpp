#include "changelens/error.hpp"

namespace changelens {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::InvalidBundle: return "InvalidBundle";
    case ErrorCode::EmptyMessage: return "EmptyMessage";
    case ErrorCode::InvalidSpan: return "InvalidSpan";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::UnscriptedPrompt: return "UnscriptedPrompt";
    case ErrorCode::TokenLimit: return "TokenLimit";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ModelError: return "ModelError";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::MissingSection: return "MissingSection";
    case ErrorCode::MalformedRanking: return "MalformedRanking";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::UnknownReport: return "UnknownReport";
    case ErrorCode::NothingToExport: return "NothingToExport";
    case ErrorCode::Misaligned: return "Misaligned";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UsageError: return "UsageError";
  }
  return "Unknown";
}

}  // namespace changelens
