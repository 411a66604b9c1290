#include <doctest.h>

#include <set>

#include "changelens/error.hpp"
#include "changelens/inference.hpp"
#include "helpers.hpp"

using namespace changelens;

namespace {

const char* kWellFormed = R"(VERDICT: ERRONEOUS
CONFIDENCE: 0.85
FAULT_CLASS: ResourceExhaustion
ROOT_CAUSES:
1. session cache never evicts entries | memory climbs steadily
2. connection pool too small
RECOMMENDED_ACTION: rollback
OBSERVATION:
Memory climbs after the deploy.
ANOMALY_ANALYSIS:
The increase starts at the change time.
FAULT_CLASSIFICATION:
Resource exhaustion of the heap.
ROOT_CAUSE:
The cache never evicts entries.
MITIGATION:
Roll back and add eviction.
)";

std::string reply_with_root_cause(const std::string& root_cause_text) {
  return "VERDICT: ERRONEOUS\nCONFIDENCE: 0.9\nFAULT_CLASS: CodeDefect\nROOT_CAUSES:\n1. bad parser\n"
         "ROOT_CAUSE:\n" + root_cause_text + "\n";
}

// Fixture words occupy distinct embedding buckets at this dimension, so
// token similarity is exactly 1 for shared words and 0 otherwise.
constexpr std::size_t kRefineDim = 1024;

void require_distinct_buckets() {
  const HashingEmbedder e(kRefineDim);
  std::set<std::size_t> seen;
  for (const char* w : {"alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet",
                        "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra"})
    REQUIRE(seen.insert(e.bucket(w)).second);
}

RetrievedCase reference_case(const std::string& root_cause_text) {
  RetrievedCase rc;
  rc.record.case_id = "REF-1";
  rc.record.domain_text = "reference";
  rc.record.report.ecd_verdict = true;
  rc.record.report.cot = {{CoTKind::RootCause, root_cause_text}};
  rc.similarity = 0.9;
  return rc;
}

}  // namespace

TEST_SUITE("inference") {
  TEST_CASE("query for a case with no findings") {
    const auto ev = prepare_case(testing::first_with(false), InferenceConfig{});
    const auto q = build_query(ev.domain_text);
    CHECK(q.anomaly_summary == kNoAnomalies);
    CHECK(q.service == testing::first_with(false).ticket.service);
    CHECK(build_query(ev.domain_text) == q);
  }

  TEST_CASE("query names the pattern and the metric of a finding") {
    const auto ev = prepare_case(testing::first_with(true), InferenceConfig{});
    REQUIRE_FALSE(ev.evidence.findings.empty());
    const auto q = build_query(ev.domain_text);
    const auto& f = ev.evidence.findings[0];
    CHECK(q.anomaly_summary.find(std::string(to_string(f.pattern))) != std::string::npos);
    CHECK(q.anomaly_summary.find(f.source) != std::string::npos);
    CHECK(q.anomaly_summary.size() <= kMaxAnomalySummary);
  }

  TEST_CASE("well-formed output parses fully") {
    const auto r = parse_report(kWellFormed);
    CHECK(r.ecd_verdict);
    CHECK(r.ecd_confidence == doctest::Approx(0.85));
    REQUIRE(r.fault_class);
    CHECK(r.fault_class->kind == FaultKind::ResourceExhaustion);
    REQUIRE(r.root_cause_ranking.size() == 2);
    CHECK(r.root_cause_ranking[0].candidate == "session cache never evicts entries");
    CHECK(r.root_cause_ranking[0].rationale == "memory climbs steadily");
    CHECK(r.cot.size() == 5);
    CHECK(r.recommended_action == "rollback");
    CHECK(r.warnings.empty());
    CHECK(parse_report(render_report(r)).cot == r.cot);
  }

  TEST_CASE("missing verdict is a MissingSection error") {
    try {
      parse_report("CONFIDENCE: 0.3\nOBSERVATION:\nnothing\n");
      FAIL("expected MissingSection");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingSection);
      CHECK(e.detail() == "VERDICT");
    }
  }

  TEST_CASE("six candidates are truncated to five with a warning") {
    std::string out = "VERDICT: ERRONEOUS\nCONFIDENCE: 0.7\nFAULT_CLASS: CodeDefect\nROOT_CAUSES:\n";
    for (int i = 1; i <= 6; ++i) out += std::to_string(i) + ". cause " + std::string(1, static_cast<char>('a' + i)) + "\n";
    const auto r = parse_report(out);
    CHECK(r.root_cause_ranking.size() == kMaxRankedCauses);
    CHECK_FALSE(r.warnings.empty());
  }

  TEST_CASE("malformed ranking lines are rejected") {
    try {
      parse_report("VERDICT: ERRONEOUS\nROOT_CAUSES:\nfirst a thing\n");
      FAIL("expected MalformedRanking");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MalformedRanking);
    }
  }

  TEST_CASE("normal verdict drops class and ranking") {
    const auto r = parse_report("VERDICT: NORMAL\nCONFIDENCE: 0.9\nFAULT_CLASS: CodeDefect\nROOT_CAUSES:\n1. x\n");
    CHECK_FALSE(r.ecd_verdict);
    CHECK_FALSE(r.fault_class);
    CHECK(r.root_cause_ranking.empty());
  }

  TEST_CASE("configurable taxonomy maps aliases and keeps other labels") {
    FaultTaxonomy tax;
    tax.aliases["oom"] = FaultKind::ResourceExhaustion;
    CHECK(tax.classify("OOM").kind == FaultKind::ResourceExhaustion);
    const auto other = tax.classify("cosmic ray");
    CHECK(other.kind == FaultKind::Other);
    CHECK(other.detail == "cosmic ray");
  }

  TEST_CASE("refinement keeps a passing report unchanged") {
    // Ten reference tokens; the candidate shares all of them.
    require_distinct_buckets();
    const std::string ref_text = "alpha bravo charlie delta echo foxtrot golf hotel india juliet";
    auto gw = std::make_shared<testing::QueueBackend>(std::deque<std::string>{"unused"}, kRefineDim);
    const LlmGateway gateway(ProviderConfig{}, gw);
    const auto report = parse_report(reply_with_root_cause(ref_text));
    const auto out = refine_report(report, {"sys", "user"}, {reference_case(ref_text)}, gateway, InferenceConfig{});
    CHECK(out.passed);
    CHECK(out.rewrites == 0);
    CHECK(out.report == report);
    CHECK(gw->requests.empty());
  }

  TEST_CASE("a weak report is rewritten once and passes") {
    require_distinct_buckets();
    const std::string ref_text = "alpha bravo charlie delta echo foxtrot golf hotel india juliet";
    // 3 of 10 tokens shared scores 0.3; 7 of 10 scores 0.7.
    const std::string weak = "alpha bravo charlie kilo lima mike november oscar papa quebec";
    const std::string better = "alpha bravo charlie delta echo foxtrot golf kilo lima mike";
    auto backend = std::make_shared<testing::QueueBackend>(std::deque<std::string>{reply_with_root_cause(better)}, kRefineDim);
    const LlmGateway gateway(ProviderConfig{}, backend);
    const auto report = parse_report(reply_with_root_cause(weak));
    const auto out = refine_report(report, {"sys", "user"}, {reference_case(ref_text)}, gateway, InferenceConfig{});
    REQUIRE(out.attempts.size() == 2);
    CHECK(out.attempts[0].aggregate == doctest::Approx(0.3));
    CHECK(out.attempts[1].aggregate == doctest::Approx(0.7));
    CHECK(out.rewrites == 1);
    CHECK(out.passed);
    CHECK_FALSE(out.flagged_for_review);
    CHECK(out.reference_case_id == "REF-1");
    // The rewrite request carries deficiency notes, never the reference text.
    REQUIRE(backend->requests.size() == 1);
    CHECK(backend->requests[0].user_prompt.find(kReviewerFeedbackHeader) != std::string::npos);
    CHECK(backend->requests[0].user_prompt.find("juliet") == std::string::npos);
  }

  TEST_CASE("all attempts below threshold return the best one flagged") {
    require_distinct_buckets();
    const std::string ref_text = "alpha bravo charlie delta echo foxtrot golf hotel india juliet";
    const std::string weak = "alpha bravo charlie kilo lima mike november oscar papa quebec";
    const std::string weaker = "alpha kilo lima mike november oscar papa quebec romeo sierra";
    auto backend = std::make_shared<testing::QueueBackend>(std::deque<std::string>{reply_with_root_cause(weaker)}, kRefineDim);
    const LlmGateway gateway(ProviderConfig{}, backend);
    const auto report = parse_report(reply_with_root_cause(weak));
    const auto out = refine_report(report, {"sys", "user"}, {reference_case(ref_text)}, gateway, InferenceConfig{});
    CHECK(out.rewrites == 2);
    CHECK(out.attempts.size() == 3);
    CHECK_FALSE(out.passed);
    CHECK(out.flagged_for_review);
    CHECK(out.score.aggregate == doctest::Approx(0.3));
  }

  TEST_CASE("erroneous and normal cases through the scripted model") {
    const auto& corpus = testing::small_corpus();
    const auto gateway = testing::scripted_gateway(corpus);
    const auto kb = corpus.history_kb(gateway);
    const auto& bad = testing::first_with(true);
    const auto run = run_case(bad, &kb, *gateway, InferenceConfig{});
    CHECK(run.report.ecd_verdict);
    REQUIRE(run.report.fault_class);
    CHECK(*run.report.fault_class == *bad.ground_truth->fault_type);
    CHECK(run.report.cot.size() == 5);
    CHECK(run.audit.report_id == bad.ticket.ticket_id);

    const auto normal = run_case(testing::first_with(false), &kb, *gateway, InferenceConfig{});
    CHECK_FALSE(normal.report.ecd_verdict);
    CHECK_FALSE(normal.report.fault_class);
    CHECK(normal.report.root_cause_ranking.empty());
  }

  TEST_CASE("dropping retrieval leaves no retrieved text in the audit") {
    const auto& corpus = testing::small_corpus();
    const auto gateway = testing::scripted_gateway(corpus);
    const auto kb = corpus.history_kb(gateway);
    InferenceConfig cfg;
    cfg.flags.drop_rag = true;
    const auto run = run_case(testing::first_with(true), &kb, *gateway, cfg, "no_rag");
    CHECK(run.audit.retrieved.empty());
    CHECK(run.audit.user_prompt.find(kRetrievedHeader) == std::string::npos);
    CHECK(run.audit.report_id == make_report_id(testing::first_with(true).ticket.ticket_id, "no_rag"));
  }

  TEST_CASE("system prompt follows the task and reasoning switches") {
    InferenceConfig cfg;
    CHECK(build_system_prompt(cfg).find("OBSERVATION:") != std::string::npos);
    cfg.flags.drop_cot = true;
    CHECK(build_system_prompt(cfg).find("OBSERVATION:") == std::string::npos);
    cfg.tasks = {Task::ECD};
    CHECK(build_system_prompt(cfg).find("ROOT_CAUSES:") == std::string::npos);
  }

  TEST_CASE("configuration bounds") {
    InferenceConfig cfg;
    cfg.cot_threshold = 1.5;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.tasks = {Task::FT};
    CHECK_THROWS_AS(cfg.validate(), Error);
  }
}
