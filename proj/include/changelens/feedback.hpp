#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "changelens/inference.hpp"
#include "changelens/knowledge_base.hpp"
#include "changelens/types.hpp"

namespace changelens {

// One JSON file per report under `dir`, written atomically. An empty dir
// keeps records in memory only.
class AuditStore {
 public:
  explicit AuditStore(std::string dir = {});

  void put(const AuditRecord& record);
  std::optional<AuditRecord> get(const std::string& report_id) const;
  bool contains(const std::string& report_id) const;
  std::vector<std::string> ids() const;  // sorted
  std::vector<AuditRecord> all() const;  // sorted by report_id
  const std::string& dir() const { return dir_; }

 private:
  std::string file_for(const std::string& report_id) const;

  std::string dir_;
  mutable std::mutex mutex_;
  std::map<std::string, AuditRecord> cache_;
};

enum class Label { Good, Bad };

std::string_view to_string(Label l);
std::optional<Label> parse_label(std::string_view s);

struct FeedbackRecord {
  std::string feedback_id;  // assigned by the store
  std::string report_id;
  Label label = Label::Good;
  std::optional<std::string> notes;
  std::optional<GroundTruth> corrected_truth;
  std::string judge;
  EpochSeconds created_at = 0;

  bool operator==(const FeedbackRecord&) const = default;
};

void to_json(Json& j, const FeedbackRecord& v);
void from_json(const Json& j, FeedbackRecord& v);

// Append-only JSONL log of labels. The latest label per report is the active
// one. Writes are serialized.
class FeedbackStore {
 public:
  explicit FeedbackStore(std::string path = {});

  // Throws Error(UnknownReport) when the audit store has no such report.
  std::string record(FeedbackRecord rec, const AuditStore& audits);

  std::optional<FeedbackRecord> active(const std::string& report_id) const;
  std::vector<FeedbackRecord> active_labels() const;  // sorted by report_id
  std::vector<FeedbackRecord> history() const;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  mutable std::mutex mutex_;
  std::vector<FeedbackRecord> log_;
  std::map<std::string, std::size_t> active_;
};

std::string record_feedback(FeedbackRecord rec, FeedbackStore& store, const AuditStore& audits);

struct KbDecision {
  bool admit = false;
  Admission admitted_by = Admission::CoTScoreGate;
  std::string reason;

  bool operator==(const KbDecision&) const = default;
};

// Human label wins in both directions; without one, the CoTScore gate decides.
KbDecision kb_update_decision(const AnalysisReport& report, const CoTScoreResult& score,
                              const std::optional<FeedbackRecord>& feedback);

struct CaseUpdate {
  KbDecision decision;
  bool added = false;
  bool revoked = false;
};

// Brings the knowledge base in line with the decision for one audited
// report (case id = report id): admits, re-admits under a new admission
// source, or revokes.
CaseUpdate apply_case_update(const AuditRecord& audit, const std::optional<FeedbackRecord>& feedback,
                             KnowledgeBase& kb, EpochSeconds now);

// Turns a reviewer correction into a new report "<report_id>#corrected",
// stores its audit record, labels it Good and admits it as HumanGood.
// Returns the new report id.
std::string admit_correction(const AuditRecord& original, const GroundTruth& corrected, const std::string& judge,
                             EpochSeconds now, AuditStore& audits, FeedbackStore& feedback, KnowledgeBase& kb);

enum class ExportFormat { KtoBinary, GrpoGroups };

struct AlignmentExportConfig {
  ExportFormat format = ExportFormat::KtoBinary;
  std::string output_path;
  bool include_unlabeled = false;  // GrpoGroups only
};

struct ExportSummary {
  std::size_t lines = 0;
  std::size_t good = 0;
  std::size_t bad = 0;
  std::size_t unlabeled = 0;
};

void to_json(Json& j, const ExportSummary& v);

struct ChatMessage {
  std::string role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

// One KTO line: {"report_id", "prompt": [system, user], "completion": [assistant], "label"}.
struct KtoExample {
  std::string report_id;
  std::vector<ChatMessage> prompt;
  std::vector<ChatMessage> completion;
  bool label = false;

  bool operator==(const KtoExample&) const = default;
};

// One GRPO line: {"report_id", "prompt", "completions", "rewards", "label"}.
struct GrpoGroup {
  std::string report_id;
  std::vector<ChatMessage> prompt;
  std::vector<std::string> completions;
  std::vector<double> rewards;
  std::optional<bool> label;

  bool operator==(const GrpoGroup&) const = default;
};

KtoExample kto_example(const AuditRecord& audit, Label label);
GrpoGroup grpo_group(const AuditRecord& audit, std::optional<Label> label);
Json to_json_line(const KtoExample& e);
Json to_json_line(const GrpoGroup& g);
KtoExample parse_kto_line(const std::string& line);
GrpoGroup parse_grpo_line(const std::string& line);

// Throws Error(NothingToExport) when no line would be written.
ExportSummary export_alignment_datasets(const AuditStore& audits, const FeedbackStore& feedback,
                                        const AlignmentExportConfig& cfg);

}  // namespace changelens
