#include <doctest.h>

#include "changelens/error.hpp"
#include "changelens/rng.hpp"
#include "changelens/serialization.hpp"
#include "changelens/text.hpp"
#include "changelens/validation.hpp"
#include "helpers.hpp"

using namespace changelens;

TEST_SUITE("text") {
  TEST_CASE("normalize_answer strips case, punctuation and spacing") {
    CHECK(normalize_answer("  Disk   FULL on /var! ") == "disk full on var");
    CHECK(normalize_answer("") == "");
  }

  TEST_CASE("word tokens are lowercase alphanumeric runs") {
    CHECK(word_tokens("It's a CPU-issue, overall.") == std::vector<std::string>{"it", "s", "a", "cpu", "issue", "overall"});
  }

  TEST_CASE("format_sig4 keeps four significant digits") {
    CHECK(format_sig4(3.14159265) == "3.142");
    CHECK(format_sig4(0.0) == "0");
  }

  TEST_CASE("fnv1a64 is stable") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  }

  TEST_CASE("iso8601 rendering is UTC") { CHECK(iso8601_utc(0) == "1970-01-01T00:00:00Z"); }

  TEST_CASE("deterministic rng reproduces its stream") {
    DeterministicRng a(9), b(9);
    for (int i = 0; i < 100; ++i) CHECK(a.below(17) == b.below(17));
    DeterministicRng c(1);
    for (int i = 0; i < 1000; ++i) {
      const double u = c.uniform();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
    }
  }
}

TEST_SUITE("validation") {
  TEST_CASE("a generated bundle validates") {
    for (const auto& b : testing::small_corpus().bundles) CHECK(validate_bundle(b).ok());
    CHECK(validate_corpus(testing::small_corpus().bundles).ok());
  }

  TEST_CASE("post-change log before change_time is a violation") {
    auto b = testing::first_with(true);
    b.post_change_logs.push_back({b.change_time - 5, "late arrival"});
    const auto r = validate_bundle(b);
    CHECK_FALSE(r.ok());
    CHECK(r.has("log before change_time"));
  }

  TEST_CASE("metric with 3 timestamps and 2 values is a length mismatch") {
    auto b = testing::first_with(false);
    b.metrics[0].timestamps.resize(3);
    b.metrics[0].values.resize(2);
    CHECK(validate_bundle(b).has("length mismatch"));
  }

  TEST_CASE("pre-change log at or after change_time is a violation") {
    auto b = testing::first_with(false);
    b.pre_change_logs.push_back({b.change_time, "too late"});
    CHECK(validate_bundle(b).has("log at or after change_time"));
  }

  TEST_CASE("duplicate ticket ids across a corpus are reported") {
    std::vector<CaseBundle> two = {testing::first_with(false), testing::first_with(false)};
    CHECK(validate_corpus(two).has("duplicate ticket_id"));
  }

  TEST_CASE("bundle JSON round trip is lossless") {
    testing::TempDir dir("bundle");
    const auto& b = testing::first_with(true);
    save_bundle(dir.file("b.json"), b);
    CHECK(load_bundle(dir.file("b.json")) == b);
  }

  TEST_CASE("malformed bundle JSON raises FormatError") {
    testing::TempDir dir("badbundle");
    std::ofstream(dir.file("b.json")) << R"({"ticket": {"ticket_id": 5}})";
    try {
      load_bundle(dir.file("b.json"));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::FormatError);
    }
  }
}
