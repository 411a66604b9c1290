#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace changelens {

using EpochSeconds = std::int64_t;

enum class ChangeType { ConfigChange, CodeDeploy, PatchFix, FeatureRollout, Other };
enum class TicketStatus { Pending, Analyzing, Done };

enum class FaultKind {
  ResourceExhaustion,
  ConfigError,
  CodeDefect,
  DependencyFailure,
  NetworkIssue,
  DataIssue,
  Other,
};

inline constexpr FaultKind kAllFaultKinds[] = {
    FaultKind::ResourceExhaustion, FaultKind::ConfigError, FaultKind::CodeDefect,
    FaultKind::DependencyFailure,  FaultKind::NetworkIssue, FaultKind::DataIssue,
    FaultKind::Other,
};

// `detail` is only meaningful for Other, where it keeps the original label.
struct FaultClass {
  FaultKind kind = FaultKind::Other;
  std::string detail;

  friend bool operator==(const FaultClass& a, const FaultClass& b) {
    return a.kind == b.kind && (a.kind != FaultKind::Other || a.detail == b.detail);
  }
};

enum class CoTKind { Observation, AnomalyAnalysis, FaultClassification, RootCause, Mitigation };

inline constexpr CoTKind kAllCoTKinds[] = {
    CoTKind::Observation, CoTKind::AnomalyAnalysis, CoTKind::FaultClassification,
    CoTKind::RootCause,   CoTKind::Mitigation,
};

std::string_view to_string(ChangeType v);
std::string_view to_string(TicketStatus v);
std::string_view to_string(FaultKind v);
std::string_view to_string(CoTKind v);

std::optional<ChangeType> parse_change_type(std::string_view s);
std::optional<TicketStatus> parse_ticket_status(std::string_view s);
std::optional<FaultKind> parse_fault_kind(std::string_view s);
std::optional<CoTKind> parse_cot_kind(std::string_view s);

// Label set used to map free-text fault labels onto FaultClass. The built-in
// seven kinds are always recognised; per-corpus aliases extend them.
struct FaultTaxonomy {
  std::map<std::string, FaultKind> aliases;  // lowercase alias -> kind

  FaultClass classify(std::string_view label) const;
};

std::string display_name(const FaultClass& fc);

struct ChangeTicket {
  std::string ticket_id;
  std::string service;
  ChangeType change_type = ChangeType::Other;
  EpochSeconds submit_time = 0;
  EpochSeconds analysis_start = 0;
  EpochSeconds analysis_end = 0;
  std::string description;
  TicketStatus status = TicketStatus::Pending;

  bool operator==(const ChangeTicket&) const = default;
};

struct MetricSeries {
  std::string name;
  std::string unit;
  std::vector<EpochSeconds> timestamps;
  std::vector<double> values;

  bool operator==(const MetricSeries&) const = default;
};

struct LogEvent {
  EpochSeconds timestamp = 0;
  std::string message;

  bool operator==(const LogEvent&) const = default;
};

struct GroundTruth {
  bool erroneous = false;
  std::optional<FaultClass> fault_type;
  std::optional<std::string> root_cause;
  std::optional<std::string> resolution;

  bool operator==(const GroundTruth&) const = default;
};

struct CaseBundle {
  ChangeTicket ticket;
  std::vector<MetricSeries> metrics;
  std::vector<LogEvent> pre_change_logs;
  std::vector<LogEvent> post_change_logs;
  EpochSeconds change_time = 0;
  std::optional<GroundTruth> ground_truth;

  bool operator==(const CaseBundle&) const = default;
};

struct CoTSection {
  CoTKind kind = CoTKind::Observation;
  std::string text;

  bool operator==(const CoTSection&) const = default;
};

struct RankedCause {
  std::string candidate;
  std::string rationale;

  bool operator==(const RankedCause&) const = default;
};

inline constexpr std::size_t kMaxRankedCauses = 5;

struct AnalysisReport {
  std::string ticket_id;
  bool ecd_verdict = false;
  double ecd_confidence = 0.0;
  std::optional<FaultClass> fault_class;
  std::vector<RankedCause> root_cause_ranking;  // empty == absent
  std::vector<CoTSection> cot;
  std::string raw_model_output;
  std::int64_t elapsed_ms = 0;
  std::string recommended_action;
  std::vector<std::string> warnings;

  const CoTSection* section(CoTKind kind) const;
  bool operator==(const AnalysisReport&) const = default;
};

}  // namespace changelens
