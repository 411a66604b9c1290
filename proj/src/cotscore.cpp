#include "changelens/cotscore.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "changelens/error.hpp"
#include "changelens/kernels.hpp"
#include "changelens/text.hpp"

namespace changelens {

std::string_view to_string(SimilarityMethod m) {
  return m == SimilarityMethod::GreedyTokenF1 ? "GreedyTokenF1" : "SentenceCosine";
}

std::optional<SimilarityMethod> parse_similarity_method(std::string_view s) {
  if (s == "GreedyTokenF1" || s == "greedy_token_f1") return SimilarityMethod::GreedyTokenF1;
  if (s == "SentenceCosine" || s == "sentence_cosine") return SimilarityMethod::SentenceCosine;
  return std::nullopt;
}

void CoTConfig::validate() const {
  double sum = 0.0;
  for (auto k : kAllCoTKinds) {
    auto it = weights.find(k);
    if (it == weights.end())
      throw Error(ErrorCode::InvalidArgument, "cot weights: missing weight for " + std::string(to_string(k)));
    if (!(it->second >= 0.0))
      throw Error(ErrorCode::InvalidArgument, "cot weights: negative weight for " + std::string(to_string(k)));
    sum += it->second;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "cot weights must sum to 1");
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "cot threshold must be in [0,1]");
}

CoTScoreResult CoTScoreResult::not_applicable() {
  CoTScoreResult r;
  r.applicable = false;
  return r;
}

namespace {

std::string header_key(std::string_view s) {
  std::string out;
  for (char c : to_lower(trim(s))) {
    const char d = c == '_' ? ' ' : c;
    if (d == ' ' && (out.empty() || out.back() == ' ')) continue;
    out.push_back(d);
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::optional<CoTKind> header_kind(std::string_view label) {
  static const std::unordered_map<std::string, CoTKind> aliases = {
      {"observation", CoTKind::Observation},
      {"observations", CoTKind::Observation},
      {"anomaly analysis", CoTKind::AnomalyAnalysis},
      {"analysis", CoTKind::AnomalyAnalysis},
      {"fault classification", CoTKind::FaultClassification},
      {"classification", CoTKind::FaultClassification},
      {"triage", CoTKind::FaultClassification},
      {"root cause", CoTKind::RootCause},
      {"root cause analysis", CoTKind::RootCause},
      {"conclusion", CoTKind::RootCause},
      {"mitigation", CoTKind::Mitigation},
      {"mitigations", CoTKind::Mitigation},
      {"remediation", CoTKind::Mitigation},
      {"recommendation", CoTKind::Mitigation},
  };
  auto it = aliases.find(header_key(label));
  if (it == aliases.end()) return std::nullopt;
  return it->second;
}

struct HeaderHit {
  CoTKind kind;
  std::string rest;  // same-line content after the colon
};

std::optional<HeaderHit> parse_header(std::string_view line) {
  auto s = trim(line);
  while (!s.empty() && (s.front() == '#' || s.front() == '*')) s.remove_prefix(1);
  s = trim(s);
  const auto colon = s.find(':');
  auto label = colon == std::string_view::npos ? s : s.substr(0, colon);
  while (!label.empty() && label.back() == '*') label.remove_suffix(1);
  const auto kind = header_kind(label);
  if (!kind) return std::nullopt;
  std::string_view rest;
  if (colon != std::string_view::npos) {
    rest = s.substr(colon + 1);
    while (!rest.empty() && rest.front() == '*') rest.remove_prefix(1);
    rest = trim(rest);
  }
  return HeaderHit{*kind, std::string(rest)};
}

std::string_view header_text(CoTKind k) {
  switch (k) {
    case CoTKind::Observation: return "Observation";
    case CoTKind::AnomalyAnalysis: return "Anomaly Analysis";
    case CoTKind::FaultClassification: return "Fault Classification";
    case CoTKind::RootCause: return "Root Cause";
    case CoTKind::Mitigation: return "Mitigation";
  }
  return "Observation";
}

double greedy_token_f1(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
                       const Embedder& embedder) {
  if (cand.empty()) return 0.0;
  const auto dim = embedder.dimension();
  std::unordered_map<std::string, EmbeddingVector> cache;
  auto fill = [&](const std::vector<std::string>& tokens) {
    std::vector<double> m;
    m.reserve(tokens.size() * dim);
    for (const auto& t : tokens) {
      auto it = cache.find(t);
      if (it == cache.end()) it = cache.emplace(t, embedder.embed(t)).first;
      m.insert(m.end(), it->second.values.begin(), it->second.values.end());
    }
    return m;
  };
  const auto cm = fill(cand);
  const auto rm = fill(ref);
  const auto g = kernels::greedy_maxima_parallel({cm, cand.size(), dim}, {rm, ref.size(), dim});
  auto mean_clamped = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += std::clamp(x, 0.0, 1.0);
    return s / static_cast<double>(v.size());
  };
  const double precision = mean_clamped(g.row_max);
  const double recall = mean_clamped(g.col_max);
  if (precision + recall <= 0.0) return 0.0;
  return std::clamp(2.0 * precision * recall / (precision + recall), 0.0, 1.0);
}

}  // namespace

std::vector<CoTSection> segment_cot(std::string_view text) {
  std::map<CoTKind, std::string> bodies;
  CoTKind current = CoTKind::Observation;
  auto append = [&](CoTKind k, std::string_view line) {
    auto& b = bodies[k];
    if (!b.empty()) b += "\n";
    b += line;
  };
  for (const auto& line : split_lines(text)) {
    if (auto h = parse_header(line)) {
      current = h->kind;
      bodies[current];
      if (!h->rest.empty()) append(current, h->rest);
      continue;
    }
    append(current, line);
  }
  std::vector<CoTSection> out;
  for (auto k : kAllCoTKinds) {
    auto it = bodies.find(k);
    if (it == bodies.end()) continue;
    const auto body = std::string(trim(it->second));
    if (!body.empty()) out.push_back({k, body});
  }
  return out;
}

std::string render_cot(const std::vector<CoTSection>& sections) {
  std::string out;
  for (auto k : kAllCoTKinds) {
    for (const auto& s : sections) {
      if (s.kind != k || is_blank(s.text)) continue;
      if (!out.empty()) out += "\n";
      out += std::string(header_text(k)) + ":\n" + std::string(trim(s.text)) + "\n";
    }
  }
  return out;
}

double section_similarity(std::string_view candidate, std::string_view reference, SimilarityMethod method,
                          const Embedder& embedder) {
  const auto ref = word_tokens(reference);
  if (ref.empty()) throw Error(ErrorCode::EmptyReference, "reference section has no tokens");
  const auto cand = word_tokens(candidate);
  if (cand.empty()) return 0.0;
  if (method == SimilarityMethod::SentenceCosine) {
    const double c = cosine_similarity(embedder.embed(candidate), embedder.embed(reference));
    return std::clamp((c + 1.0) / 2.0, 0.0, 1.0);
  }
  return greedy_token_f1(cand, ref, embedder);
}

CoTScoreResult score_cot(const std::vector<CoTSection>& candidate, const std::vector<CoTSection>& reference,
                         const CoTConfig& cfg, const Embedder& embedder) {
  cfg.validate();
  std::map<CoTKind, std::string> ref, cand;
  for (const auto& s : reference)
    if (!word_tokens(s.text).empty()) ref[s.kind] += (ref[s.kind].empty() ? "" : "\n") + s.text;
  for (const auto& s : candidate) cand[s.kind] += (cand[s.kind].empty() ? "" : "\n") + s.text;
  if (ref.empty()) throw Error(ErrorCode::EmptyReference, "reference CoT has no sections");

  CoTScoreResult r;
  double wsum = 0.0;
  for (const auto& [k, _] : ref) wsum += cfg.weights.at(k);
  for (const auto& [k, text] : ref) {
    // All-zero weights over the present kinds fall back to a uniform split.
    r.effective_weights[k] = wsum > 0.0 ? cfg.weights.at(k) / wsum : 1.0 / static_cast<double>(ref.size());
    auto it = cand.find(k);
    if (it == cand.end() || word_tokens(it->second).empty()) {
      r.per_section[k] = 0.0;
      r.missing_sections.push_back(k);
      continue;
    }
    r.per_section[k] = section_similarity(it->second, text, cfg.method, embedder);
  }
  for (const auto& [k, s] : r.per_section) r.aggregate += r.effective_weights[k] * s;
  r.aggregate = std::clamp(r.aggregate, 0.0, 1.0);
  r.passed = r.aggregate >= cfg.threshold;
  return r;
}

}  // namespace changelens
