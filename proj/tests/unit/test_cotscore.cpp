#include <doctest.h>

#include <set>

#include "changelens/cotscore.hpp"
#include "changelens/error.hpp"
#include "changelens/text.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace changelens;

namespace {

const HashingEmbedder& embedder() {
  static const HashingEmbedder e(1024);
  return e;
}

std::vector<CoTSection> load_cot(const std::string& fixture) {
  return segment_cot(testing::slurp(oracle::fixture_path(fixture)));
}

}  // namespace

TEST_SUITE("cotscore") {
  TEST_CASE("all five headers give five sections in canonical order") {
    const auto s = segment_cot(
        "Mitigation: roll back\nObservation: cpu high\nRoot Cause: loop\n"
        "Anomaly Analysis: after deploy\nFault Classification: resource\n");
    REQUIRE(s.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(s[i].kind == kAllCoTKinds[i]);
    CHECK(s[4].text == "roll back");
  }

  TEST_CASE("headerless text is one observation") {
    const auto s = segment_cot("cpu went up and stayed up");
    REQUIRE(s.size() == 1);
    CHECK(s[0].kind == CoTKind::Observation);
    CHECK(s[0].text == "cpu went up and stayed up");
  }

  TEST_CASE("two sections leave three missing") {
    const auto cand = segment_cot("Observation: cpu high\nRoot Cause: loop in parser\n");
    REQUIRE(cand.size() == 2);
    const auto r = score_cot(cand, load_cot("cot_reference.txt"), CoTConfig{}, embedder());
    CHECK(r.missing_sections ==
          std::vector<CoTKind>{CoTKind::AnomalyAnalysis, CoTKind::FaultClassification, CoTKind::Mitigation});
  }

  TEST_CASE("render and segment round trip") {
    const auto ref = load_cot("cot_reference.txt");
    CHECK(segment_cot(render_cot(ref)) == ref);
  }

  TEST_CASE("identical text scores one under both methods") {
    const std::string t = "heap usage climbs after the cache change";
    CHECK(section_similarity(t, t, SimilarityMethod::GreedyTokenF1, embedder()) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(section_similarity(t, t, SimilarityMethod::SentenceCosine, embedder()) == doctest::Approx(1.0).epsilon(1e-6));
  }

  TEST_CASE("disjoint vocabularies score zero") {
    const std::string a = "alpha bravo charlie";
    const std::string b = "delta echo foxtrot";
    for (const char* w : {"alpha", "bravo", "charlie"})
      for (const char* v : {"delta", "echo", "foxtrot"}) REQUIRE(embedder().bucket(w) != embedder().bucket(v));
    CHECK(section_similarity(a, b, SimilarityMethod::GreedyTokenF1, embedder()) == 0.0);
  }

  TEST_CASE("first half of a ten-token reference gives F1 two thirds") {
    const std::string ref = "alpha bravo charlie delta echo foxtrot golf hotel india juliet";
    const double f1 = section_similarity("alpha bravo charlie delta echo", ref, SimilarityMethod::GreedyTokenF1, embedder());
    CHECK(f1 == doctest::Approx(2.0 * 1.0 * 0.5 / 1.5));
  }

  TEST_CASE("weighted aggregate of two sections") {
    CoTConfig cfg;
    cfg.weights = {{CoTKind::Observation, 0.5}, {CoTKind::AnomalyAnalysis, 0.0}, {CoTKind::FaultClassification, 0.0},
                   {CoTKind::RootCause, 0.5}, {CoTKind::Mitigation, 0.0}};
    // Ten distinct tokens per reference; 8 of 10 and 4 of 10 shared with equal lengths.
    const std::vector<CoTSection> ref = {
        {CoTKind::Observation, "alpha bravo charlie delta echo foxtrot golf hotel india juliet"},
        {CoTKind::RootCause, "kilo lima mike november oscar papa quebec romeo sierra tango"},
    };
    const std::vector<CoTSection> cand = {
        {CoTKind::Observation, "alpha bravo charlie delta echo foxtrot golf hotel uniform victor"},
        {CoTKind::RootCause, "kilo lima mike november whiskey xray yankee zulu amber bronze"},
    };
    std::set<std::size_t> buckets;
    for (const auto& s : ref)
      for (const auto& w : word_tokens(s.text)) REQUIRE(buckets.insert(embedder().bucket(w)).second);
    for (const char* w : {"uniform", "victor", "whiskey", "xray", "yankee", "zulu", "amber", "bronze"})
      REQUIRE(buckets.insert(embedder().bucket(w)).second);
    const auto r = score_cot(cand, ref, cfg, embedder());
    CHECK(r.per_section.at(CoTKind::Observation) == doctest::Approx(0.8));
    CHECK(r.per_section.at(CoTKind::RootCause) == doctest::Approx(0.4));
    CHECK(r.aggregate == doctest::Approx(0.6));
    CHECK(r.passed);
  }

  TEST_CASE("identical five-section answer passes with aggregate one") {
    const auto ref = load_cot("cot_reference.txt");
    const auto r = score_cot(ref, ref, CoTConfig{}, embedder());
    CHECK(r.aggregate == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.passed);
    CHECK(r.missing_sections.empty());
  }

  TEST_CASE("a lone vague observation stays below the threshold") {
    const auto cand = load_cot("cot_vague_observation.txt");
    REQUIRE(cand.size() == 1);
    const auto r = score_cot(cand, load_cot("cot_reference.txt"), CoTConfig{}, embedder());
    CHECK(r.aggregate < CoTConfig{}.threshold);
    CHECK_FALSE(r.passed);
    CHECK(r.missing_sections.size() == 4);
  }

  TEST_CASE("aggregate is linear in the weights") {
    const auto ref = load_cot("cot_reference.txt");
    const auto cand = load_cot("cot_structured.txt");
    const auto base = score_cot(cand, ref, CoTConfig{}, embedder());
    double expected = 0.0;
    for (const auto& [kind, w] : CoTConfig{}.weights) expected += w * base.per_section.at(kind);
    CHECK(base.aggregate == doctest::Approx(expected));
    CoTConfig shifted;
    shifted.weights[CoTKind::Observation] = 0.05;
    shifted.weights[CoTKind::RootCause] = 0.40;
    const auto moved = score_cot(cand, ref, shifted, embedder());
    CHECK(moved.aggregate - base.aggregate ==
          doctest::Approx(0.10 * (base.per_section.at(CoTKind::RootCause) - base.per_section.at(CoTKind::Observation))));
  }

  TEST_CASE("empty reference is an error and bad weights are rejected") {
    CHECK_THROWS_AS(score_cot(segment_cot("Observation: x"), {}, CoTConfig{}, embedder()), Error);
    CoTConfig bad;
    bad.weights[CoTKind::Mitigation] = 0.5;
    CHECK_THROWS_AS(bad.validate(), Error);
  }
}
