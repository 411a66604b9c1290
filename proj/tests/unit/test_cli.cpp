#include <doctest.h>

#include <sstream>

#include "changelens/cli.hpp"
#include "changelens/config.hpp"
#include "changelens/serialization.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace changelens;

namespace {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// Config whose mock transcript holds the exact reply the scripted model gives
// for this case against an empty knowledge base.
std::string write_config(const testing::TempDir& dir, const CaseBundle& bundle) {
  const auto& corpus = testing::small_corpus();
  auto recorder = std::make_shared<RecordingBackend>(std::make_shared<ScriptedModel>(corpus.script, 1024));
  const LlmGateway gateway(ProviderConfig{}, recorder);
  const KnowledgeBase empty(std::make_shared<HashingEmbedder>(1024));
  run_case(bundle, &empty, gateway, InferenceConfig{});
  recorder->transcript().save(dir.file("transcript.json"));

  ServiceConfig cfg;
  cfg.data_dir = dir.file("data");
  cfg.provider.transcript_path = dir.file("transcript.json");
  write_json_file(dir.file("cfg.json"), Json(cfg));
  return dir.file("cfg.json");
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("analyze writes a report") {
    testing::TempDir dir("cli-analyze");
    const auto& bundle = testing::first_with(true);
    save_bundle(dir.file("case.json"), bundle);
    const auto cfg = write_config(dir, bundle);
    const auto r = run({"analyze", "--case", dir.file("case.json"), "--config", cfg, "--out", dir.file("report.json")});
    CHECK_MESSAGE(r.code == kExitOk, r.err);
    const auto report = read_json_file(dir.file("report.json")).get<AnalysisReport>();
    CHECK(report.ecd_verdict);
    CHECK(Json::parse(r.out)["report_id"] == bundle.ticket.ticket_id);
  }

  TEST_CASE("analyze on an invalid bundle lists the violations") {
    testing::TempDir dir("cli-invalid");
    auto bundle = testing::first_with(true);
    const auto cfg = write_config(dir, bundle);
    bundle.metrics.at(0).values.pop_back();
    save_bundle(dir.file("case.json"), bundle);
    const auto r = run({"analyze", "--case", dir.file("case.json"), "--config", cfg});
    CHECK(r.code == kExitDomainError);
    const auto err = Json::parse(r.err);
    CHECK(err["code"] == "InvalidBundle");
    CHECK(err["detail"].get<std::string>().find("length mismatch") != std::string::npos);
  }

  TEST_CASE("unknown subcommand prints usage") {
    const auto r = run({"frobnicate"});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("Usage") != std::string::npos);
    CHECK(run({}).code == kExitUsage);
    CHECK(run({"--help"}).code == kExitOk);
  }

  TEST_CASE("cotscore over fixture files") {
    const auto r = run({"cotscore", "--candidate", oracle::fixture_path("cot_structured.txt"), "--reference",
                        oracle::fixture_path("cot_reference.txt")});
    CHECK(r.code == kExitOk);
    const auto j = Json::parse(r.out);
    CHECK(j["aggregate"].get<double>() > 0.6);
    CHECK(j["passed"] == true);
  }

  TEST_CASE("bench generate then kb stats") {
    testing::TempDir dir("cli-bench");
    auto r = run({"bench", "generate", "--seed", "7", "--cases", "4", "--history", "3", "--out", dir.file("c.json")});
    REQUIRE_MESSAGE(r.code == kExitOk, r.err);
    r = run({"kb", "--kb", dir.file("kb.jsonl"), "seed", "--corpus", dir.file("c.json")});
    REQUIRE_MESSAGE(r.code == kExitOk, r.err);
    r = run({"kb", "--kb", dir.file("kb.jsonl"), "stats"});
    CHECK(r.code == kExitOk);
    CHECK(Json::parse(r.out)["active"] == 3);
  }
}
