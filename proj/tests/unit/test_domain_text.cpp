#include <doctest.h>

#include "changelens/domain_text.hpp"
#include "changelens/inference.hpp"
#include "helpers.hpp"

using namespace changelens;

namespace {

const CaseEvidence& erroneous_evidence() {
  static const CaseEvidence ev = prepare_case(testing::first_with(true), InferenceConfig{});
  return ev;
}

std::size_t find_header(const std::string& text, DomainElement e) { return text.find(section_header(e)); }

}  // namespace

TEST_SUITE("domain_text") {
  TEST_CASE("six headed sections in order") {
    const auto& ev = erroneous_evidence();
    REQUIRE_FALSE(ev.evidence.findings.empty());
    REQUIRE_FALSE(ev.evidence.novel.empty());
    std::size_t last = 0;
    for (auto e : kAllDomainElements) {
      const auto at = find_header(ev.rendered, e);
      REQUIRE(at != std::string::npos);
      CHECK(at >= last);
      last = at;
    }
    CHECK(ev.rendered.find(ev.evidence.novel[0].representative) != std::string::npos);
    CHECK(ev.rendered.find(ev.evidence.ticket.ticket_id) != std::string::npos);
  }

  TEST_CASE("dropping descriptions keeps statistics but no sentences") {
    const auto& ev = erroneous_evidence();
    AblationFlags a1;
    a1.drop_descriptions = true;
    const auto dt = render_sections(strip_descriptions(ev.evidence), a1);
    const auto text = render_domain_text(dt);
    for (const auto& f : ev.evidence.findings) CHECK(text.find(f.description) == std::string::npos);
    for (const auto& c : ev.evidence.comparisons) CHECK(text.find(c.summary) == std::string::npos);
    const auto& s3 = dt.section(DomainElement::AnomalyClassification).text;
    const auto& s5 = dt.section(DomainElement::DetailedMetricFindings).text;
    CHECK(s3.find("magnitude") != std::string::npos);
    CHECK(s5.find_first_of("0123456789") != std::string::npos);
  }

  TEST_CASE("zero findings and zero novel templates say none detected") {
    const auto& b = testing::first_with(false);
    const auto dt = compose_domain_text(b, {}, {}, {}, {});
    CHECK(dt.section(DomainElement::AnomalyTimestamps).text == kNoneDetected);
    CHECK(dt.section(DomainElement::AnomalyClassification).text.find(kNoneDetected) != std::string::npos);
    CHECK(dt.section(DomainElement::NovelLogTemplates).text == kNoneDetected);
  }

  TEST_CASE("rendering is byte-stable") {
    const auto& ev = erroneous_evidence();
    CHECK(render_domain_text(ev.domain_text) == render_domain_text(ev.domain_text));
    CHECK(prepare_case(testing::first_with(true), InferenceConfig{}).rendered == ev.rendered);
  }

  TEST_CASE("detector ablation leaves the header with the omitted marker") {
    const auto& ev = erroneous_evidence();
    AblationFlags a2;
    a2.drop_detector = true;
    const auto dt = render_sections(strip_detector_outputs(ev.evidence), a2);
    const auto& s2 = dt.section(DomainElement::AnomalyTimestamps);
    CHECK(s2.omitted);
    CHECK(s2.text == kOmittedMarker);
    const auto text = render_domain_text(dt);
    CHECK(find_header(text, DomainElement::AnomalyTimestamps) != std::string::npos);
    for (auto p : kAllPatternClasses)
      if (p != PatternClass::NoChange) CHECK(text.find(std::string(to_string(p))) == std::string::npos);
  }

  TEST_CASE("the two ablations commute") {
    const auto& ev = erroneous_evidence();
    AblationFlags both;
    both.drop_descriptions = true;
    both.drop_detector = true;
    const auto x = render_sections(strip_descriptions(strip_detector_outputs(ev.evidence)), both);
    const auto y = render_sections(strip_detector_outputs(strip_descriptions(ev.evidence)), both);
    CHECK(render_domain_text(x) == render_domain_text(y));
    CHECK(x == y);
  }
}
