#include "changelens/feedback.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "changelens/error.hpp"
#include "changelens/text.hpp"

namespace changelens {

namespace fs = std::filesystem;

AuditStore::AuditStore(std::string dir) : dir_(std::move(dir)) {
  if (dir_.empty() || !fs::exists(dir_)) return;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    auto rec = read_json_file(entry.path().string()).get<AuditRecord>();
    cache_[rec.report_id] = std::move(rec);
  }
}

std::string AuditStore::file_for(const std::string& report_id) const {
  std::string name;
  for (char c : report_id) {
    const bool safe = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' || c == '@';
    name.push_back(safe ? c : '_');
  }
  // The hash suffix keeps ids that sanitize to the same name apart.
  return (fs::path(dir_) / (name + "-" + hex64(fnv1a64(report_id)).substr(0, 8) + ".json")).string();
}

void AuditStore::put(const AuditRecord& record) {
  std::lock_guard lock(mutex_);
  if (!dir_.empty()) write_json_file(file_for(record.report_id), Json(record));
  cache_[record.report_id] = record;
}

std::optional<AuditRecord> AuditStore::get(const std::string& report_id) const {
  std::lock_guard lock(mutex_);
  auto it = cache_.find(report_id);
  if (it == cache_.end()) return std::nullopt;
  return it->second;
}

bool AuditStore::contains(const std::string& report_id) const {
  std::lock_guard lock(mutex_);
  return cache_.count(report_id) > 0;
}

std::vector<std::string> AuditStore::ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : cache_) out.push_back(id);
  return out;
}

std::vector<AuditRecord> AuditStore::all() const {
  std::lock_guard lock(mutex_);
  std::vector<AuditRecord> out;
  for (const auto& [_, r] : cache_) out.push_back(r);
  return out;
}

std::string_view to_string(Label l) { return l == Label::Good ? "Good" : "Bad"; }

std::optional<Label> parse_label(std::string_view s) {
  const auto v = to_lower(trim(s));
  if (v == "good") return Label::Good;
  if (v == "bad") return Label::Bad;
  return std::nullopt;
}

void to_json(Json& j, const FeedbackRecord& v) {
  j = Json{{"feedback_id", v.feedback_id},
           {"report_id", v.report_id},
           {"label", to_string(v.label)},
           {"judge", v.judge},
           {"created_at", v.created_at}};
  j["notes"] = v.notes ? Json(*v.notes) : Json(nullptr);
  j["corrected_truth"] = v.corrected_truth ? Json(*v.corrected_truth) : Json(nullptr);
}

void from_json(const Json& j, FeedbackRecord& v) {
  try {
    v = {};
    v.feedback_id = j.value("feedback_id", "");
    v.report_id = j.at("report_id").get<std::string>();
    const auto label = parse_label(j.at("label").get<std::string>());
    if (!label) throw Error(ErrorCode::FormatError, "label must be Good or Bad");
    v.label = *label;
    v.judge = j.value("judge", "");
    v.created_at = j.value("created_at", EpochSeconds{0});
    if (j.contains("notes") && !j.at("notes").is_null()) v.notes = j.at("notes").get<std::string>();
    if (j.contains("corrected_truth") && !j.at("corrected_truth").is_null())
      v.corrected_truth = j.at("corrected_truth").get<GroundTruth>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("feedback record: ") + e.what());
  }
}

FeedbackStore::FeedbackStore(std::string path) : path_(std::move(path)) {
  if (path_.empty()) return;
  std::ifstream in(path_);
  if (!in) return;
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    Json j;
    try {
      j = Json::parse(lines[i]);
    } catch (const nlohmann::json::exception&) {
      if (i + 1 == lines.size()) break;  // torn tail
      throw Error(ErrorCode::FormatError, path_ + ": malformed feedback on line " + std::to_string(i + 1));
    }
    log_.push_back(j.get<FeedbackRecord>());
    active_[log_.back().report_id] = log_.size() - 1;
  }
}

std::string FeedbackStore::record(FeedbackRecord rec, const AuditStore& audits) {
  if (!audits.contains(rec.report_id))
    throw Error(ErrorCode::UnknownReport, "no audited report with id " + rec.report_id, rec.report_id);
  std::lock_guard lock(mutex_);
  char id[32];
  std::snprintf(id, sizeof id, "FB-%06zu", log_.size() + 1);
  rec.feedback_id = id;
  if (!path_.empty()) {
    const fs::path p(path_);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot append to " + path_);
    out << Json(rec).dump() << "\n";
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "short write to " + path_);
  }
  log_.push_back(rec);
  active_[rec.report_id] = log_.size() - 1;
  return rec.feedback_id;
}

std::optional<FeedbackRecord> FeedbackStore::active(const std::string& report_id) const {
  std::lock_guard lock(mutex_);
  auto it = active_.find(report_id);
  if (it == active_.end()) return std::nullopt;
  return log_[it->second];
}

std::vector<FeedbackRecord> FeedbackStore::active_labels() const {
  std::lock_guard lock(mutex_);
  std::vector<FeedbackRecord> out;
  for (const auto& [_, idx] : active_) out.push_back(log_[idx]);
  return out;
}

std::vector<FeedbackRecord> FeedbackStore::history() const {
  std::lock_guard lock(mutex_);
  return log_;
}

std::string record_feedback(FeedbackRecord rec, FeedbackStore& store, const AuditStore& audits) {
  return store.record(std::move(rec), audits);
}

KbDecision kb_update_decision(const AnalysisReport& /*report*/, const CoTScoreResult& score,
                              const std::optional<FeedbackRecord>& feedback) {
  if (feedback) {
    if (feedback->label == Label::Good) return {true, Admission::HumanGood, "human label Good"};
    return {false, Admission::HumanGood, "human label Bad"};
  }
  if (!score.applicable) return {false, Admission::CoTScoreGate, "gate not applicable"};
  if (score.passed) return {true, Admission::CoTScoreGate, "passed CoTScore gate"};
  return {false, Admission::CoTScoreGate, "below threshold"};
}

CaseUpdate apply_case_update(const AuditRecord& audit, const std::optional<FeedbackRecord>& feedback,
                             KnowledgeBase& kb, EpochSeconds now) {
  CaseUpdate u;
  u.decision = kb_update_decision(audit.report, audit.cot_score, feedback);
  const auto existing = kb.get(audit.report_id);
  if (!u.decision.admit) {
    if (existing) u.revoked = kb.revoke(audit.report_id, u.decision.reason);
    return u;
  }
  if (existing && existing->admitted_by == u.decision.admitted_by) return u;
  if (existing) u.revoked = kb.revoke(audit.report_id, "re-admitted as " + std::string(to_string(u.decision.admitted_by)));
  CaseRecord rec;
  rec.case_id = audit.report_id;
  rec.domain_text = audit.domain_text;
  rec.report = audit.report;
  if (feedback && feedback->corrected_truth) rec.ground_truth = feedback->corrected_truth;
  rec.admitted_by = u.decision.admitted_by;
  rec.created_at = now;
  kb.add_case(std::move(rec));
  u.added = true;
  return u;
}

namespace {

void set_section(AnalysisReport& r, CoTKind kind, const std::string& text) {
  for (auto& s : r.cot) {
    if (s.kind == kind) {
      s.text = text;
      return;
    }
  }
  r.cot.push_back({kind, text});
  std::stable_sort(r.cot.begin(), r.cot.end(),
                   [](const CoTSection& a, const CoTSection& b) { return a.kind < b.kind; });
}

}  // namespace

std::string admit_correction(const AuditRecord& original, const GroundTruth& corrected, const std::string& judge,
                             EpochSeconds now, AuditStore& audits, FeedbackStore& feedback, KnowledgeBase& kb) {
  AuditRecord c = original;
  c.report_id = original.report_id + "#corrected";
  AnalysisReport& r = c.report;
  r.ecd_verdict = corrected.erroneous;
  r.ecd_confidence = 1.0;
  r.fault_class = corrected.erroneous ? corrected.fault_type : std::nullopt;
  r.root_cause_ranking.clear();
  if (corrected.erroneous && corrected.root_cause)
    r.root_cause_ranking.push_back({*corrected.root_cause, "confirmed by reviewer"});
  if (corrected.erroneous && corrected.fault_type)
    set_section(r, CoTKind::FaultClassification, "Reviewer-confirmed fault class: " + display_name(*corrected.fault_type) + ".");
  if (corrected.erroneous && corrected.root_cause)
    set_section(r, CoTKind::RootCause, "Reviewer-confirmed root cause: " + *corrected.root_cause + ".");
  if (corrected.resolution) set_section(r, CoTKind::Mitigation, *corrected.resolution);
  r.recommended_action = corrected.erroneous ? "rollback" : "proceed";
  r.warnings.clear();
  r.raw_model_output = render_report(r);
  c.raw_output = r.raw_model_output;
  c.attempts.clear();
  c.cot_score = CoTScoreResult::not_applicable();
  c.passed = false;
  c.flagged_for_review = false;
  audits.put(c);

  FeedbackRecord fb;
  fb.report_id = c.report_id;
  fb.label = Label::Good;
  fb.notes = "reviewer correction of " + original.report_id;
  fb.corrected_truth = corrected;
  fb.judge = judge;
  fb.created_at = now;
  feedback.record(fb, audits);
  apply_case_update(c, feedback.active(c.report_id), kb, now);
  return c.report_id;
}

void to_json(Json& j, const ExportSummary& v) {
  j = Json{{"lines", v.lines}, {"good", v.good}, {"bad", v.bad}, {"unlabeled", v.unlabeled}};
}

namespace {

Json messages_json(const std::vector<ChatMessage>& m) {
  Json a = Json::array();
  for (const auto& x : m) a.push_back({{"role", x.role}, {"content", x.content}});
  return a;
}

std::vector<ChatMessage> messages_from(const Json& a) {
  std::vector<ChatMessage> out;
  for (const auto& x : a) out.push_back({x.at("role").get<std::string>(), x.at("content").get<std::string>()});
  return out;
}

std::vector<ChatMessage> prompt_messages(const AuditRecord& a) {
  return {{"system", a.system_prompt}, {"user", a.user_prompt}};
}

}  // namespace

KtoExample kto_example(const AuditRecord& audit, Label label) {
  return {audit.report_id, prompt_messages(audit), {{"assistant", audit.raw_output}}, label == Label::Good};
}

GrpoGroup grpo_group(const AuditRecord& audit, std::optional<Label> label) {
  GrpoGroup g;
  g.report_id = audit.report_id;
  g.prompt = prompt_messages(audit);
  for (const auto& a : audit.attempts) {
    g.completions.push_back(a.completion);
    g.rewards.push_back(a.aggregate);
  }
  if (label) g.label = *label == Label::Good;
  return g;
}

Json to_json_line(const KtoExample& e) {
  return Json{{"report_id", e.report_id},
              {"prompt", messages_json(e.prompt)},
              {"completion", messages_json(e.completion)},
              {"label", e.label}};
}

Json to_json_line(const GrpoGroup& g) {
  Json j{{"report_id", g.report_id},
         {"prompt", messages_json(g.prompt)},
         {"completions", g.completions},
         {"rewards", g.rewards}};
  j["label"] = g.label ? Json(*g.label) : Json(nullptr);
  return j;
}

KtoExample parse_kto_line(const std::string& line) {
  try {
    const auto j = Json::parse(line);
    return {j.at("report_id").get<std::string>(), messages_from(j.at("prompt")), messages_from(j.at("completion")),
            j.at("label").get<bool>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("KTO line: ") + e.what());
  }
}

GrpoGroup parse_grpo_line(const std::string& line) {
  try {
    const auto j = Json::parse(line);
    GrpoGroup g;
    g.report_id = j.at("report_id").get<std::string>();
    g.prompt = messages_from(j.at("prompt"));
    g.completions = j.at("completions").get<std::vector<std::string>>();
    g.rewards = j.at("rewards").get<std::vector<double>>();
    if (!j.at("label").is_null()) g.label = j.at("label").get<bool>();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("GRPO line: ") + e.what());
  }
}

ExportSummary export_alignment_datasets(const AuditStore& audits, const FeedbackStore& feedback,
                                        const AlignmentExportConfig& cfg) {
  if (cfg.output_path.empty()) throw Error(ErrorCode::InvalidArgument, "export needs an output path");
  ExportSummary summary;
  std::string text;
  if (cfg.format == ExportFormat::KtoBinary) {
    for (const auto& fb : feedback.active_labels()) {
      const auto audit = audits.get(fb.report_id);
      if (!audit) continue;
      text += to_json_line(kto_example(*audit, fb.label)).dump() + "\n";
      ++summary.lines;
      ++(fb.label == Label::Good ? summary.good : summary.bad);
    }
  } else {
    for (const auto& audit : audits.all()) {
      if (audit.attempts.empty()) continue;
      const auto fb = feedback.active(audit.report_id);
      if (!fb && !cfg.include_unlabeled) continue;
      text += to_json_line(grpo_group(audit, fb ? std::optional(fb->label) : std::nullopt)).dump() + "\n";
      ++summary.lines;
      if (!fb) ++summary.unlabeled;
      else ++(fb->label == Label::Good ? summary.good : summary.bad);
    }
  }
  if (summary.lines == 0) throw Error(ErrorCode::NothingToExport, "no records qualify for export");
  write_text_file_atomic(cfg.output_path, text);
  return summary;
}

}  // namespace changelens
