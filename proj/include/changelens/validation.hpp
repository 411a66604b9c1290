#pragma once

#include <string>
#include <vector>

#include "changelens/types.hpp"

namespace changelens {

struct Violation {
  std::string path;     // e.g. "metrics[2].values"
  std::string message;  // e.g. "length mismatch"

  bool operator==(const Violation&) const = default;
};

struct ValidationResult {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(std::string_view message) const;
  std::string to_string() const;
};

// Checks every CaseBundle invariant. Pure; violations are returned, never thrown.
ValidationResult validate_bundle(const CaseBundle& bundle);

// Bundle checks plus ticket_id uniqueness across the corpus.
ValidationResult validate_corpus(const std::vector<CaseBundle>& bundles);

}  // namespace changelens
