#include "changelens/domain_text.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "changelens/text.hpp"

namespace changelens {

std::string_view section_header(DomainElement e) {
  switch (e) {
    case DomainElement::TicketRecord: return "## 1. Change Ticket Record";
    case DomainElement::AnomalyTimestamps: return "## 2. Identified Anomaly Timestamps";
    case DomainElement::AnomalyClassification: return "## 3. Anomaly Classification and Metric Descriptions";
    case DomainElement::PrePostComparison: return "## 4. Pre- and Post-Change Metric Comparison";
    case DomainElement::DetailedMetricFindings: return "## 5. Detailed Metric Comparison and Findings";
    case DomainElement::NovelLogTemplates: return "## 6. New Log Templates";
  }
  return "";
}

const DomainSection& DomainText::section(DomainElement e) const {
  for (const auto& s : sections)
    if (s.element == e) return s;
  return sections.at(0);
}

DomainEvidence strip_descriptions(DomainEvidence evidence) {
  for (auto& f : evidence.findings) f.description.clear();
  for (auto& c : evidence.comparisons) c.summary.clear();
  return evidence;
}

DomainEvidence strip_detector_outputs(DomainEvidence evidence) {
  evidence.findings.clear();
  evidence.detector_enabled = false;
  return evidence;
}

namespace {

std::string stamp(EpochSeconds t) { return std::to_string(t) + " (" + iso8601_utc(t) + ")"; }

std::string percent(double delta) {
  return (delta > 0 ? "+" : "") + format_sig4(delta * 100.0) + "%";
}

std::string ticket_section(const DomainEvidence& ev) {
  const auto& t = ev.ticket;
  std::string s;
  s += "Ticket ID: " + t.ticket_id + "\n";
  s += "Service: " + t.service + "\n";
  s += "Change type: " + std::string(to_string(t.change_type)) + "\n";
  s += "Status: " + std::string(to_string(t.status)) + "\n";
  s += "Submitted: " + stamp(t.submit_time) + "\n";
  s += "Analysis start: " + stamp(t.analysis_start) + "\n";
  s += "Analysis end: " + stamp(t.analysis_end) + "\n";
  s += "Change applied: " + stamp(ev.change_time) + "\n";
  s += "Description: " + t.description;
  return s;
}

std::string timestamps_section(const std::vector<AnomalyFinding>& findings) {
  if (findings.empty()) return std::string(kNoneDetected);
  std::string s;
  for (const auto& f : findings) {
    if (!s.empty()) s += "\n";
    s += "- " + stamp(f.start);
    if (f.end != f.start) s += " to " + stamp(f.end);
    s += ": " + f.source;
  }
  return s;
}

std::string raw_stats_line(const WindowComparison& c) {
  return "- " + c.source + ": pre mean " + format_sig4(c.before.mean) + ", post mean " +
         format_sig4(c.after.mean) + ", post max " + format_sig4(c.after.max) + ", post min " +
         format_sig4(c.after.min);
}

std::string classification_section(const DomainEvidence& ev) {
  if (!ev.detector_enabled) {
    if (ev.comparisons.empty()) return std::string(kNoneDetected);
    std::string s = "Raw series summaries:";
    for (const auto& c : ev.comparisons) s += "\n" + raw_stats_line(c);
    return s;
  }
  if (ev.findings.empty()) return std::string(kNoneDetected);
  std::string s;
  for (const auto& f : ev.findings) {
    if (!s.empty()) s += "\n";
    s += "- " + f.source + ": " + std::string(to_string(f.pattern)) + ", magnitude " +
         format_sig4(f.magnitude) + ", span " + std::to_string(f.start) + ".." + std::to_string(f.end);
    if (!f.description.empty()) s += "\n  " + f.description;
  }
  return s;
}

std::string comparison_section(const DomainEvidence& ev) {
  std::vector<std::string> changed;
  for (const auto& c : ev.comparisons)
    if (c.material(ev.material_change)) changed.push_back(c.source);
  std::string s = "Metrics compared: " + std::to_string(ev.comparisons.size()) + ".";
  if (changed.empty()) return s + " Materially changed: none.";
  return s + " Materially changed (|delta| >= " + format_sig4(ev.material_change * 100.0) +
         "%): " + join(changed, ", ") + ".";
}

std::string detail_section(const DomainEvidence& ev) {
  if (ev.comparisons.empty()) return "no metrics";
  std::map<std::string, std::vector<std::string>> labels;
  for (const auto& f : ev.findings) labels[f.source].emplace_back(to_string(f.pattern));
  std::string s;
  for (const auto& c : ev.comparisons) {
    if (!s.empty()) s += "\n";
    s += "- " + c.source;
    if (!c.unit.empty()) s += " (" + c.unit + ")";
    s += ": max " + format_sig4(c.before.max) + " -> " + format_sig4(c.after.max) + " (" +
         percent(c.delta_max) + "), min " + format_sig4(c.before.min) + " -> " +
         format_sig4(c.after.min) + " (" + percent(c.delta_min) + "), mean " +
         format_sig4(c.before.mean) + " -> " + format_sig4(c.after.mean) + " (" +
         percent(c.delta_mean) + ")";
    if (auto it = labels.find(c.source); it != labels.end()) s += "; findings: " + join(it->second, ", ");
    if (!c.summary.empty()) s += "\n  " + c.summary;
  }
  return s;
}

std::string novel_section(const std::vector<LogTemplate>& novel) {
  if (novel.empty()) return std::string(kNoneDetected);
  std::string s;
  for (const auto& t : novel) {
    if (!s.empty()) s += "\n";
    s += "- [template " + std::to_string(t.template_id) + "] " + t.text() + " (support " +
         std::to_string(t.support) + ")\n  first seen: \"" + t.representative + "\"";
  }
  return s;
}

}  // namespace

DomainText render_sections(const DomainEvidence& input, const AblationFlags& flags) {
  DomainEvidence ev = input;
  std::sort(ev.findings.begin(), ev.findings.end(), [](const auto& a, const auto& b) {
    return std::tie(a.source, a.start, a.pattern, a.magnitude) <
           std::tie(b.source, b.start, b.pattern, b.magnitude);
  });
  std::sort(ev.comparisons.begin(), ev.comparisons.end(),
            [](const auto& a, const auto& b) { return a.source < b.source; });
  std::sort(ev.novel.begin(), ev.novel.end(),
            [](const auto& a, const auto& b) { return a.template_id < b.template_id; });

  DomainText dt;
  dt.ablation = flags;
  dt.sections.push_back({DomainElement::TicketRecord, ticket_section(ev), false});
  if (ev.detector_enabled) {
    dt.sections.push_back({DomainElement::AnomalyTimestamps, timestamps_section(ev.findings), false});
  } else {
    dt.sections.push_back({DomainElement::AnomalyTimestamps, std::string(kOmittedMarker), true});
  }
  dt.sections.push_back({DomainElement::AnomalyClassification, classification_section(ev), false});
  dt.sections.push_back({DomainElement::PrePostComparison, comparison_section(ev), false});
  dt.sections.push_back({DomainElement::DetailedMetricFindings, detail_section(ev), false});
  dt.sections.push_back({DomainElement::NovelLogTemplates, novel_section(ev.novel), false});
  return dt;
}

DomainText compose_domain_text(const CaseBundle& bundle, const std::vector<AnomalyFinding>& findings,
                               const std::vector<WindowComparison>& comparisons,
                               const std::vector<LogTemplate>& novel, const AblationFlags& flags,
                               double material_change) {
  DomainEvidence ev{bundle.ticket, bundle.change_time, findings, comparisons, novel, true, material_change};
  if (flags.drop_descriptions) ev = strip_descriptions(std::move(ev));
  if (flags.drop_detector) ev = strip_detector_outputs(std::move(ev));
  return render_sections(ev, flags);
}

std::string render_domain_text(const DomainText& dt) {
  std::string out;
  for (const auto& s : dt.sections) {
    if (!out.empty()) out += "\n\n";
    out += section_header(s.element);
    out += "\n";
    out += s.text;
  }
  out += "\n";
  return out;
}

}  // namespace changelens
