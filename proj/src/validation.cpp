#include "changelens/validation.hpp"

#include <cmath>
#include <set>

#include "changelens/text.hpp"

namespace changelens {

bool ValidationResult::has(std::string_view message) const {
  for (const auto& v : violations)
    if (v.message == message) return true;
  return false;
}

std::string ValidationResult::to_string() const {
  std::string out;
  for (const auto& v : violations) out += v.path + ": " + v.message + "\n";
  return out;
}

namespace {

std::string idx(std::string_view base, std::size_t i) {
  return std::string(base) + "[" + std::to_string(i) + "]";
}

void check_ticket(const ChangeTicket& t, std::vector<Violation>& out) {
  if (is_blank(t.ticket_id)) out.push_back({"ticket.ticket_id", "ticket_id empty"});
  if (t.submit_time > t.analysis_start)
    out.push_back({"ticket.analysis_start", "analysis_start before submit_time"});
  if (t.analysis_start > t.analysis_end)
    out.push_back({"ticket.analysis_end", "analysis_end before analysis_start"});
}

void check_metric(const MetricSeries& m, const std::string& path, std::vector<Violation>& out) {
  if (m.values.size() != m.timestamps.size())
    out.push_back({path + ".values", "length mismatch"});
  for (std::size_t i = 1; i < m.timestamps.size(); ++i) {
    if (m.timestamps[i] <= m.timestamps[i - 1]) {
      out.push_back({idx(path + ".timestamps", i), "timestamps not strictly increasing"});
      break;
    }
  }
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    if (!std::isfinite(m.values[i])) {
      out.push_back({idx(path + ".values", i), "non-finite value"});
      break;
    }
  }
}

void check_logs(const std::vector<LogEvent>& logs, std::string_view base, bool pre,
                EpochSeconds change_time, std::vector<Violation>& out) {
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const auto& e = logs[i];
    const auto path = idx(base, i);
    if (is_blank(e.message)) out.push_back({path + ".message", "empty log message"});
    if (pre && e.timestamp >= change_time)
      out.push_back({path + ".timestamp", "log at or after change_time"});
    if (!pre && e.timestamp < change_time)
      out.push_back({path + ".timestamp", "log before change_time"});
  }
}

}  // namespace

ValidationResult validate_bundle(const CaseBundle& b) {
  ValidationResult r;
  auto& out = r.violations;
  check_ticket(b.ticket, out);
  for (std::size_t i = 0; i < b.metrics.size(); ++i) check_metric(b.metrics[i], idx("metrics", i), out);
  check_logs(b.pre_change_logs, "pre_change_logs", true, b.change_time, out);
  check_logs(b.post_change_logs, "post_change_logs", false, b.change_time, out);
  if (b.change_time < b.ticket.submit_time || b.change_time > b.ticket.analysis_end)
    out.push_back({"change_time", "change_time outside [submit_time, analysis_end]"});
  if (b.ground_truth && !b.ground_truth->erroneous) {
    if (b.ground_truth->fault_type)
      out.push_back({"ground_truth.fault_type", "fault_type on non-erroneous case"});
    if (b.ground_truth->root_cause)
      out.push_back({"ground_truth.root_cause", "root_cause on non-erroneous case"});
  }
  return r;
}

ValidationResult validate_corpus(const std::vector<CaseBundle>& bundles) {
  ValidationResult r;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    auto one = validate_bundle(bundles[i]);
    for (auto& v : one.violations) r.violations.push_back({idx("cases", i) + "." + v.path, v.message});
    if (!seen.insert(bundles[i].ticket.ticket_id).second)
      r.violations.push_back({idx("cases", i) + ".ticket.ticket_id", "duplicate ticket_id"});
  }
  return r;
}

}  // namespace changelens
