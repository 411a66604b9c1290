#include <doctest.h>

#include <algorithm>

#include "changelens/error.hpp"
#include "changelens/llm_gateway.hpp"
#include "helpers.hpp"

using namespace changelens;

namespace {

ProviderConfig mock_config(const std::string& transcript_path) {
  ProviderConfig pc;
  pc.backend = BackendKind::DeterministicMock;
  pc.transcript_path = transcript_path;
  return pc;
}

}  // namespace

TEST_SUITE("llm_gateway") {
  TEST_CASE("scripted prompt replays byte-identically") {
    testing::TempDir dir("gateway-mock");
    Transcript t;
    t.add(prompt_hash("sys", "user"), "VERDICT: NORMAL");
    t.save(dir.file("t.json"));
    const auto pc = mock_config(dir.file("t.json"));
    const ChatRequest req{"sys", "user"};
    const auto first = complete(req, pc);
    CHECK(first == "VERDICT: NORMAL");
    CHECK(complete(req, pc) == first);
  }

  TEST_CASE("strict mock rejects unscripted prompts") {
    testing::TempDir dir("gateway-strict");
    Transcript().save(dir.file("t.json"));
    try {
      complete(ChatRequest{"sys", "something new"}, mock_config(dir.file("t.json")));
      FAIL("expected UnscriptedPrompt");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnscriptedPrompt);
    }
    auto lenient = mock_config(dir.file("t.json"));
    lenient.strict = false;
    lenient.fallback_reply = "fallback";
    CHECK(complete(ChatRequest{"sys", "something new"}, lenient) == "fallback");
  }

  TEST_CASE("unreachable endpoint reports transport failure with retry count") {
    ProviderConfig pc;
    pc.backend = BackendKind::Remote;
    pc.endpoint = "http://127.0.0.1:1/v1";
    pc.max_retries = 2;
    pc.backoff_ms = 1;
    pc.timeout_seconds = 1;
    try {
      complete(ChatRequest{"sys", "user"}, pc);
      FAIL("expected TransportError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TransportError);
      CHECK(std::string(e.what()).find("2 retries") != std::string::npos);
    }
  }

  TEST_CASE("mock embeddings") {
    const HashingEmbedder e(1024);
    const auto a = e.embed("heap usage climbs");
    CHECK(a == e.embed("heap usage climbs"));
    CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
    CHECK(e.bucket("heap") != e.bucket("disk"));
    CHECK(cosine_similarity(e.embed("heap"), e.embed("disk")) == 0.0);
    CHECK_THROWS_AS(e.embed(""), Error);
    try {
      e.embed("   ");
    } catch (const Error& err) {
      CHECK(err.code() == ErrorCode::EmptyText);
    }
  }

  TEST_CASE("transcript save and load") {
    testing::TempDir dir("gateway-transcript");
    Transcript t;
    t.add("h1", "one");
    t.add("h2", "two");
    t.save(dir.file("t.json"));
    const auto back = Transcript::load(dir.file("t.json"));
    CHECK(back.entries() == t.entries());
    REQUIRE(back.find("h2"));
    CHECK(*back.find("h2") == "two");
    CHECK(back.find("h3") == nullptr);
  }

  TEST_CASE("provider validation") {
    ProviderConfig remote;
    remote.backend = BackendKind::Remote;
    CHECK_THROWS_AS(remote.validate(), Error);
    ProviderConfig mock;
    CHECK_THROWS_AS(mock.validate(), Error);
  }

  TEST_CASE("gateway counts calls and audits them") {
    testing::TempDir dir("gateway-audit");
    ProviderConfig pc;
    pc.audit_path = dir.file("calls.jsonl");
    auto backend = std::make_shared<testing::QueueBackend>(std::deque<std::string>{"a", "b"});
    const LlmGateway gw(pc, backend);
    CHECK(gw.complete(ChatRequest{"s", "u"}) == "a");
    CHECK(gw.complete(ChatRequest{"s", "u"}) == "b");
    CHECK(gw.calls() == 2);
    const auto log = testing::slurp(dir.file("calls.jsonl"));
    CHECK(std::count(log.begin(), log.end(), '\n') == 2);
  }
}
