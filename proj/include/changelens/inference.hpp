#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "changelens/cotscore.hpp"
#include "changelens/domain_text.hpp"
#include "changelens/knowledge_base.hpp"
#include "changelens/llm_gateway.hpp"
#include "changelens/log_miner.hpp"
#include "changelens/metric_prep.hpp"
#include "changelens/types.hpp"

namespace changelens {

enum class Task { ECD, FT, RCCA };

std::string_view to_string(Task t);
std::optional<Task> parse_task(std::string_view s);

struct InferenceConfig {
  RetrievalConfig retrieval;
  AblationFlags flags;
  double cot_threshold = 0.6;
  int max_rewrites = 2;  // CoT rewrites, and separately format re-asks
  bool refine = true;    // false: score the CoT but never rewrite
  std::set<Task> tasks = {Task::ECD, Task::FT, Task::RCCA};
  DrainConfig drain;
  PatternRuleConfig rules;
  EpochSeconds log_window_seconds = 60;
  FaultTaxonomy taxonomy;
  CoTConfig cot;
  int max_tokens = 1024;

  // tau in [0,1], 0 <= max_rewrites <= 5, ECD always in the task set.
  void validate() const;
};

struct StructuredQuery {
  std::string service;
  ChangeType change_type = ChangeType::Other;
  std::string anomaly_summary;  // at most 512 chars
  std::string novel_template_digest;

  std::string render() const;
  bool operator==(const StructuredQuery&) const = default;
};

inline constexpr std::size_t kMaxAnomalySummary = 512;
inline constexpr std::string_view kNoAnomalies = "no anomalies detected";

// Parsed back out of the rendered sections, so it depends on nothing but the
// domain text.
StructuredQuery build_query(const DomainText& dt);

// Stage one: log mining, metric shape rules and window comparisons, rendered
// as domain text. Throws Error(InvalidBundle) listing violations.
struct CaseEvidence {
  DomainEvidence evidence;  // before ablation transforms
  DomainText domain_text;
  std::string rendered;
  std::vector<MetricSeries> template_series;
};

CaseEvidence prepare_case(const CaseBundle& bundle, const InferenceConfig& cfg);

struct PromptPair {
  std::string system_prompt;
  std::string user_prompt;
};

inline constexpr std::string_view kRetrievedHeader = "### Retrieved historical cases";
inline constexpr std::string_view kCurrentHeader = "### Current change";
inline constexpr std::string_view kPreviousAnswerHeader = "### Previous answer";
inline constexpr std::string_view kReviewerFeedbackHeader = "### Reviewer feedback";
inline constexpr std::string_view kFormatCorrectionHeader = "### Format correction";

// Condensed view of a historical case: verdict, fault class, root cause and
// mitigation. Carries no detector output and no description sentences.
std::string case_summary(const CaseRecord& record, double similarity);

std::string build_system_prompt(const InferenceConfig& cfg);
PromptPair build_prompt(const std::string& domain_text, const std::vector<RetrievedCase>& retrieved,
                        const InferenceConfig& cfg);

// Parses VERDICT / CONFIDENCE / FAULT_CLASS / ROOT_CAUSES /
// RECOMMENDED_ACTION and the five reasoning markers. Unknown uppercase
// markers are skipped. Throws MissingSection (detail = marker name),
// MalformedRanking, or ParseFailure for an unreadable verdict.
AnalysisReport parse_report(std::string_view model_output, const FaultTaxonomy& taxonomy = {});

// Inverse of parse_report for the fields it reads: renders a report in the
// required reply format.
std::string render_report(const AnalysisReport& report);

struct AttemptRecord {
  std::string completion;
  double aggregate = 0.0;
  bool parsed = true;

  bool operator==(const AttemptRecord&) const = default;
};

struct RefineOutcome {
  AnalysisReport report;
  CoTScoreResult score;
  std::vector<AttemptRecord> attempts;  // original first
  std::optional<std::string> reference_case_id;
  bool passed = false;
  bool flagged_for_review = false;
  int rewrites = 0;
};

// Per-section deficiency lines given to the rewriting step. The reference
// text itself is never exposed.
std::string deficiency_feedback(const CoTScoreResult& score, double threshold);

RefineOutcome refine_report(const AnalysisReport& report, const PromptPair& prompt,
                            const std::vector<RetrievedCase>& references, const LlmGateway& gateway,
                            const InferenceConfig& cfg);

struct AuditRecord {
  std::string report_id;
  std::string variant;
  std::string ticket_id;
  std::string domain_text;
  std::string query;
  std::vector<std::pair<std::string, double>> retrieved;
  std::string system_prompt;
  std::string user_prompt;
  std::string raw_output;  // completion behind the final report
  AnalysisReport report;
  CoTScoreResult cot_score;
  std::vector<AttemptRecord> attempts;
  std::optional<std::string> reference_case_id;
  bool passed = false;
  bool flagged_for_review = false;
  int format_retries = 0;

  bool operator==(const AuditRecord&) const = default;
};

void to_json(Json& j, const CoTScoreResult& v);
void from_json(const Json& j, CoTScoreResult& v);
void to_json(Json& j, const AuditRecord& v);
void from_json(const Json& j, AuditRecord& v);

struct AnalysisRun {
  AnalysisReport report;
  AuditRecord audit;
};

std::string make_report_id(std::string_view ticket_id, std::string_view variant);

// Full pipeline for one case. `kb` may be null (treated as empty). Gateway
// failures surface as Error(ModelError) with the original code in detail.
AnalysisRun run_case(const CaseBundle& bundle, const KnowledgeBase* kb, const LlmGateway& gateway,
                     const InferenceConfig& cfg, std::string_view variant = {});

AnalysisReport analyze_case(const CaseBundle& bundle, const KnowledgeBase* kb, const LlmGateway& gateway,
                            const InferenceConfig& cfg);

}  // namespace changelens
