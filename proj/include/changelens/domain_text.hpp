#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "changelens/log_miner.hpp"
#include "changelens/metric_prep.hpp"
#include "changelens/types.hpp"

namespace changelens {

enum class DomainElement {
  TicketRecord,
  AnomalyTimestamps,
  AnomalyClassification,
  PrePostComparison,
  DetailedMetricFindings,
  NovelLogTemplates,
};

inline constexpr DomainElement kAllDomainElements[] = {
    DomainElement::TicketRecord,          DomainElement::AnomalyTimestamps,
    DomainElement::AnomalyClassification, DomainElement::PrePostComparison,
    DomainElement::DetailedMetricFindings, DomainElement::NovelLogTemplates,
};

inline constexpr std::string_view kOmittedMarker = "[omitted by ablation]";
inline constexpr std::string_view kNoneDetected = "none detected";

std::string_view section_header(DomainElement e);

// A1 = drop_descriptions, A2 = drop_detector. drop_rag / drop_cot only
// affect prompt assembly.
struct AblationFlags {
  bool drop_descriptions = false;
  bool drop_detector = false;
  bool drop_rag = false;
  bool drop_cot = false;

  bool operator==(const AblationFlags&) const = default;
};

struct DomainSection {
  DomainElement element = DomainElement::TicketRecord;
  std::string text;
  bool omitted = false;

  bool operator==(const DomainSection&) const = default;
};

struct DomainText {
  std::vector<DomainSection> sections;  // always six, in kAllDomainElements order
  AblationFlags ablation;

  const DomainSection& section(DomainElement e) const;
  bool operator==(const DomainText&) const = default;
};

// Everything the six sections are rendered from. Ablations are transforms on
// this structure, so they compose in either order.
struct DomainEvidence {
  ChangeTicket ticket;
  EpochSeconds change_time = 0;
  std::vector<AnomalyFinding> findings;
  std::vector<WindowComparison> comparisons;
  std::vector<LogTemplate> novel;
  bool detector_enabled = true;
  double material_change = 0.05;

  bool operator==(const DomainEvidence&) const = default;
};

// A1: clears finding descriptions and comparison summaries.
DomainEvidence strip_descriptions(DomainEvidence evidence);
// A2: drops detector findings; sections 2/3 fall back to raw series stats.
DomainEvidence strip_detector_outputs(DomainEvidence evidence);

DomainText render_sections(const DomainEvidence& evidence, const AblationFlags& flags);

DomainText compose_domain_text(const CaseBundle& bundle, const std::vector<AnomalyFinding>& findings,
                               const std::vector<WindowComparison>& comparisons,
                               const std::vector<LogTemplate>& novel, const AblationFlags& flags,
                               double material_change = 0.05);

// Flat text with stable headers; byte-identical for equal inputs.
std::string render_domain_text(const DomainText& dt);

}  // namespace changelens
