#include <doctest.h>

#include <sstream>

#include "changelens/error.hpp"
#include "changelens/feedback.hpp"
#include "helpers.hpp"

using namespace changelens;

namespace {

AuditRecord audit(const std::string& id, std::vector<double> attempt_scores = {0.7}) {
  AuditRecord a;
  a.report_id = id;
  a.ticket_id = id;
  a.domain_text = "domain text of " + id;
  a.system_prompt = "sys";
  a.user_prompt = "user " + id;
  a.report.ecd_verdict = true;
  a.report.cot = {{CoTKind::Observation, "cpu high"}};
  for (std::size_t i = 0; i < attempt_scores.size(); ++i)
    a.attempts.push_back({"completion " + std::to_string(i), attempt_scores[i], true});
  a.raw_output = a.attempts.empty() ? "raw" : a.attempts.back().completion;
  a.cot_score.aggregate = attempt_scores.empty() ? 0.0 : attempt_scores.back();
  a.cot_score.passed = a.cot_score.aggregate >= 0.6;
  a.passed = a.cot_score.passed;
  return a;
}

FeedbackRecord label(const std::string& report_id, Label l) {
  FeedbackRecord f;
  f.report_id = report_id;
  f.label = l;
  f.judge = "reviewer";
  return f;
}

std::vector<std::string> lines_of(const std::string& path) {
  std::istringstream in(testing::slurp(path));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

}  // namespace

TEST_SUITE("feedback") {
  TEST_CASE("labels on known and unknown reports") {
    AuditStore audits;
    audits.put(audit("R1"));
    FeedbackStore store;
    const auto id = record_feedback(label("R1", Label::Good), store, audits);
    CHECK_FALSE(id.empty());
    REQUIRE(store.active("R1"));
    CHECK(store.active("R1")->label == Label::Good);
    CHECK(kb_update_decision(AnalysisReport{}, CoTScoreResult{}, store.active("R1")).admit);
    try {
      record_feedback(label("nope", Label::Good), store, audits);
      FAIL("expected UnknownReport");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnknownReport);
    }
  }

  TEST_CASE("latest label supersedes and survives reopening") {
    testing::TempDir dir("feedback-supersede");
    AuditStore audits(dir.file("audit"));
    audits.put(audit("R1"));
    {
      FeedbackStore store(dir.file("feedback.jsonl"));
      record_feedback(label("R1", Label::Bad), store, audits);
      record_feedback(label("R1", Label::Good), store, audits);
      CHECK(store.active("R1")->label == Label::Good);
      CHECK(store.history().size() == 2);
    }
    FeedbackStore reopened(dir.file("feedback.jsonl"));
    CHECK(reopened.active("R1")->label == Label::Good);
    CHECK(reopened.active_labels().size() == 1);
    CHECK(AuditStore(dir.file("audit")).get("R1") == audits.get("R1"));
  }

  TEST_CASE("gate decisions") {
    CoTScoreResult pass;
    pass.passed = true;
    CoTScoreResult fail;
    const auto a = kb_update_decision({}, pass, std::nullopt);
    CHECK(a.admit);
    CHECK(a.admitted_by == Admission::CoTScoreGate);
    const auto b = kb_update_decision({}, fail, label("R", Label::Good));
    CHECK(b.admit);
    CHECK(b.admitted_by == Admission::HumanGood);
    const auto c = kb_update_decision({}, fail, std::nullopt);
    CHECK_FALSE(c.admit);
    CHECK(c.reason == "below threshold");
    CHECK_FALSE(kb_update_decision({}, pass, label("R", Label::Bad)).admit);
  }

  TEST_CASE("case updates admit, re-admit and revoke") {
    KnowledgeBase kb(std::make_shared<HashingEmbedder>(256));
    const auto a = audit("R1");
    auto u = apply_case_update(a, std::nullopt, kb, 10);
    CHECK(u.added);
    CHECK(kb.get("R1")->admitted_by == Admission::CoTScoreGate);
    u = apply_case_update(a, label("R1", Label::Good), kb, 11);
    CHECK(u.added);
    CHECK(u.revoked);
    CHECK(kb.get("R1")->admitted_by == Admission::HumanGood);
    u = apply_case_update(a, label("R1", Label::Bad), kb, 12);
    CHECK(u.revoked);
    CHECK_FALSE(kb.contains("R1"));
  }

  TEST_CASE("a correction becomes a new good case") {
    AuditStore audits;
    FeedbackStore store;
    KnowledgeBase kb(std::make_shared<HashingEmbedder>(256));
    const auto original = audit("R1", {0.3});
    audits.put(original);
    GroundTruth truth;
    truth.erroneous = true;
    truth.fault_type = FaultClass{FaultKind::ConfigError, {}};
    truth.root_cause = "timeout set to zero";
    const auto id = admit_correction(original, truth, "reviewer", 100, audits, store, kb);
    CHECK(id == "R1#corrected");
    REQUIRE(kb.get(id));
    CHECK(kb.get(id)->admitted_by == Admission::HumanGood);
    CHECK(kb.get(id)->report.root_cause_ranking.at(0).candidate == "timeout set to zero");
    CHECK(store.active(id)->label == Label::Good);
    CHECK(audits.contains(id));
  }

  TEST_CASE("binary export writes one line per active label") {
    testing::TempDir dir("feedback-kto");
    AuditStore audits;
    audits.put(audit("R1"));
    audits.put(audit("R2"));
    FeedbackStore store;
    record_feedback(label("R1", Label::Good), store, audits);
    record_feedback(label("R2", Label::Bad), store, audits);
    AlignmentExportConfig cfg;
    cfg.output_path = dir.file("kto.jsonl");
    const auto s = export_alignment_datasets(audits, store, cfg);
    CHECK(s.lines == 2);
    CHECK(s.good == 1);
    CHECK(s.bad == 1);
    const auto lines = lines_of(cfg.output_path);
    REQUIRE(lines.size() == 2);
    CHECK(parse_kto_line(lines[0]) == kto_example(*audits.get("R1"), Label::Good));
    CHECK(parse_kto_line(lines[1]) == kto_example(*audits.get("R2"), Label::Bad));
  }

  TEST_CASE("group export carries every attempt and its score") {
    testing::TempDir dir("feedback-grpo");
    AuditStore audits;
    audits.put(audit("R1", {0.3, 0.5, 0.7}));
    FeedbackStore store;
    AlignmentExportConfig cfg;
    cfg.format = ExportFormat::GrpoGroups;
    cfg.output_path = dir.file("grpo.jsonl");
    CHECK_THROWS_AS(export_alignment_datasets(audits, store, cfg), Error);
    cfg.include_unlabeled = true;
    const auto s = export_alignment_datasets(audits, store, cfg);
    CHECK(s.unlabeled == 1);
    const auto g = parse_grpo_line(lines_of(cfg.output_path).at(0));
    CHECK(g.completions.size() == 3);
    CHECK(g.rewards == std::vector<double>{0.3, 0.5, 0.7});
    CHECK_FALSE(g.label);
  }

  TEST_CASE("nothing labeled means nothing to export") {
    testing::TempDir dir("feedback-empty");
    AuditStore audits;
    audits.put(audit("R1"));
    FeedbackStore store;
    AlignmentExportConfig cfg;
    cfg.output_path = dir.file("kto.jsonl");
    try {
      export_alignment_datasets(audits, store, cfg);
      FAIL("expected NothingToExport");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NothingToExport);
    }
    CHECK_FALSE(std::filesystem::exists(cfg.output_path));
  }
}
