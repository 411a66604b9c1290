#include "changelens/types.hpp"

#include "changelens/text.hpp"

namespace changelens {

std::string_view to_string(ChangeType v) {
  switch (v) {
    case ChangeType::ConfigChange: return "ConfigChange";
    case ChangeType::CodeDeploy: return "CodeDeploy";
    case ChangeType::PatchFix: return "PatchFix";
    case ChangeType::FeatureRollout: return "FeatureRollout";
    case ChangeType::Other: return "Other";
  }
  return "Other";
}

std::string_view to_string(TicketStatus v) {
  switch (v) {
    case TicketStatus::Pending: return "Pending";
    case TicketStatus::Analyzing: return "Analyzing";
    case TicketStatus::Done: return "Done";
  }
  return "Pending";
}

std::string_view to_string(FaultKind v) {
  switch (v) {
    case FaultKind::ResourceExhaustion: return "ResourceExhaustion";
    case FaultKind::ConfigError: return "ConfigError";
    case FaultKind::CodeDefect: return "CodeDefect";
    case FaultKind::DependencyFailure: return "DependencyFailure";
    case FaultKind::NetworkIssue: return "NetworkIssue";
    case FaultKind::DataIssue: return "DataIssue";
    case FaultKind::Other: return "Other";
  }
  return "Other";
}

std::string_view to_string(CoTKind v) {
  switch (v) {
    case CoTKind::Observation: return "Observation";
    case CoTKind::AnomalyAnalysis: return "AnomalyAnalysis";
    case CoTKind::FaultClassification: return "FaultClassification";
    case CoTKind::RootCause: return "RootCause";
    case CoTKind::Mitigation: return "Mitigation";
  }
  return "Observation";
}

std::optional<ChangeType> parse_change_type(std::string_view s) {
  for (auto v : {ChangeType::ConfigChange, ChangeType::CodeDeploy, ChangeType::PatchFix,
                 ChangeType::FeatureRollout, ChangeType::Other})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

std::optional<TicketStatus> parse_ticket_status(std::string_view s) {
  for (auto v : {TicketStatus::Pending, TicketStatus::Analyzing, TicketStatus::Done})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

std::optional<FaultKind> parse_fault_kind(std::string_view s) {
  for (auto v : kAllFaultKinds)
    if (to_string(v) == s) return v;
  return std::nullopt;
}

std::optional<CoTKind> parse_cot_kind(std::string_view s) {
  for (auto v : kAllCoTKinds)
    if (to_string(v) == s) return v;
  return std::nullopt;
}

FaultClass FaultTaxonomy::classify(std::string_view label) const {
  const auto t = trim(label);
  for (auto k : kAllFaultKinds) {
    if (k != FaultKind::Other && normalize_answer(to_string(k)) == normalize_answer(t))
      return {k, {}};
  }
  if (auto it = aliases.find(to_lower(t)); it != aliases.end()) return {it->second, {}};
  // "Other" or "Other: explanation" keeps the explanation as detail.
  if (starts_with_ci(t, "other")) {
    auto rest = trim(t.substr(5));
    if (!rest.empty() && (rest.front() == ':' || rest.front() == '-')) rest = trim(rest.substr(1));
    return {FaultKind::Other, std::string(rest)};
  }
  return {FaultKind::Other, std::string(t)};
}

std::string display_name(const FaultClass& fc) {
  std::string out(to_string(fc.kind));
  if (fc.kind == FaultKind::Other && !fc.detail.empty()) out += ": " + fc.detail;
  return out;
}

const CoTSection* AnalysisReport::section(CoTKind kind) const {
  for (const auto& s : cot)
    if (s.kind == kind) return &s;
  return nullptr;
}

}  // namespace changelens
