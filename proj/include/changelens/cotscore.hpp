#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "changelens/llm_gateway.hpp"
#include "changelens/types.hpp"

namespace changelens {

enum class SimilarityMethod { GreedyTokenF1, SentenceCosine };

std::string_view to_string(SimilarityMethod m);
std::optional<SimilarityMethod> parse_similarity_method(std::string_view s);

struct CoTConfig {
  std::map<CoTKind, double> weights = {
      {CoTKind::Observation, 0.15},         {CoTKind::AnomalyAnalysis, 0.20},
      {CoTKind::FaultClassification, 0.20}, {CoTKind::RootCause, 0.30},
      {CoTKind::Mitigation, 0.15},
  };
  SimilarityMethod method = SimilarityMethod::GreedyTokenF1;
  double threshold = 0.6;

  // Every kind weighted, weights >= 0, sum 1 +- 1e-9, threshold in [0,1].
  void validate() const;
};

struct CoTScoreResult {
  std::map<CoTKind, double> per_section;        // kinds present in the reference
  std::map<CoTKind, double> effective_weights;  // renormalized over those kinds
  double aggregate = 0.0;
  bool passed = false;
  bool applicable = true;  // false when no reference CoT was available
  std::vector<CoTKind> missing_sections;  // in the reference, absent from the candidate

  static CoTScoreResult not_applicable();
  bool operator==(const CoTScoreResult&) const = default;
};

// Splits on the five section headers (case-insensitive alias table, optional
// leading '#'/'*' and trailing ':'). Text before the first header, or text
// with no header at all, is an Observation. Sections come out in canonical
// order; a repeated header appends to its section; empty sections are dropped.
std::vector<CoTSection> segment_cot(std::string_view text);

// Renders sections with canonical headers; segment_cot(render_cot(x)) == x.
std::string render_cot(const std::vector<CoTSection>& sections);

// Throws Error(EmptyReference) when the reference has no tokens.
double section_similarity(std::string_view candidate, std::string_view reference, SimilarityMethod method,
                          const Embedder& embedder);

// Throws Error(EmptyReference) when the reference has no sections.
CoTScoreResult score_cot(const std::vector<CoTSection>& candidate, const std::vector<CoTSection>& reference,
                         const CoTConfig& cfg, const Embedder& embedder);

}  // namespace changelens
