#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace changelens {

enum class ErrorCode {
  InvalidArgument,
  FormatError,
  InvalidBundle,
  EmptyMessage,
  InvalidSpan,
  EmptyWindow,
  TransportError,
  UnscriptedPrompt,
  TokenLimit,
  EmptyText,
  DuplicateId,
  EmptyQuery,
  DimensionMismatch,
  ModelError,
  ParseFailure,
  MissingSection,
  MalformedRanking,
  EmptyReference,
  UnknownReport,
  NothingToExport,
  Misaligned,
  IoError,
  UsageError,
};

std::string_view error_code_name(ErrorCode code);

// Domain failure carrying a stable machine-readable code. `detail` holds
// structured context (violation lists, offending section names, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {})
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace changelens
