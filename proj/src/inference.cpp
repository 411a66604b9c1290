#include "changelens/inference.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>

#include "changelens/error.hpp"
#include "changelens/text.hpp"
#include "changelens/validation.hpp"

namespace changelens {

std::string_view to_string(Task t) {
  switch (t) {
    case Task::ECD: return "ECD";
    case Task::FT: return "FT";
    case Task::RCCA: return "RCCA";
  }
  return "ECD";
}

std::optional<Task> parse_task(std::string_view s) {
  for (auto t : {Task::ECD, Task::FT, Task::RCCA})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

void InferenceConfig::validate() const {
  retrieval.validate();
  if (!(cot_threshold >= 0.0 && cot_threshold <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "cot_threshold must be in [0,1]");
  if (max_rewrites < 0 || max_rewrites > 5)
    throw Error(ErrorCode::InvalidArgument, "max_rewrites must be in [0,5]");
  if (!tasks.count(Task::ECD)) throw Error(ErrorCode::InvalidArgument, "task set must include ECD");
  if (log_window_seconds <= 0) throw Error(ErrorCode::InvalidArgument, "log_window_seconds must be positive");
  if (max_tokens <= 0) throw Error(ErrorCode::InvalidArgument, "max_tokens must be positive");
  drain.validate();
  cot.validate();
}

std::string StructuredQuery::render() const {
  std::string s = "service: " + service + "\n";
  s += "change_type: " + std::string(to_string(change_type)) + "\n";
  s += "anomalies: " + anomaly_summary + "\n";
  s += "novel_templates: " + (novel_template_digest.empty() ? std::string("none") : novel_template_digest);
  return s;
}

namespace {

std::string after_prefix(const std::string& text, std::string_view prefix) {
  for (const auto& line : split_lines(text))
    if (line.rfind(prefix, 0) == 0) return std::string(trim(std::string_view(line).substr(prefix.size())));
  return {};
}

}  // namespace

StructuredQuery build_query(const DomainText& dt) {
  StructuredQuery q;
  const auto& ticket = dt.section(DomainElement::TicketRecord).text;
  q.service = after_prefix(ticket, "Service:");
  q.change_type = parse_change_type(after_prefix(ticket, "Change type:")).value_or(ChangeType::Other);

  std::vector<std::string> parts;
  const auto& cls = dt.section(DomainElement::AnomalyClassification);
  if (!cls.omitted) {
    for (const auto& line : split_lines(cls.text)) {
      if (line.rfind("- ", 0) != 0) continue;
      const auto mag = line.find(", magnitude ");
      if (mag == std::string::npos) continue;
      parts.push_back(line.substr(2, mag - 2));
    }
  }
  const auto& cmp = dt.section(DomainElement::PrePostComparison).text;
  if (const auto at = cmp.find("Materially changed ("); at != std::string::npos) {
    const auto colon = cmp.find("): ", at);
    if (colon != std::string::npos) {
      auto names = cmp.substr(colon + 3);
      if (!names.empty() && names.back() == '.') names.pop_back();
      parts.push_back("changed: " + names);
    }
  }
  q.anomaly_summary = parts.empty() ? std::string(kNoAnomalies) : join(parts, "; ");
  if (q.anomaly_summary.size() > kMaxAnomalySummary) q.anomaly_summary.resize(kMaxAnomalySummary);

  std::vector<std::string> novel;
  const auto& nov = dt.section(DomainElement::NovelLogTemplates);
  if (!nov.omitted) {
    for (const auto& line : split_lines(nov.text)) {
      if (line.rfind("- [template ", 0) != 0) continue;
      const auto open = line.find("] ");
      const auto close = line.rfind(" (support ");
      if (open == std::string::npos || close == std::string::npos || close <= open) continue;
      novel.push_back(line.substr(open + 2, close - open - 2));
    }
  }
  q.novel_template_digest = join(novel, " | ");
  return q;
}

CaseEvidence prepare_case(const CaseBundle& bundle, const InferenceConfig& cfg) {
  const auto validation = validate_bundle(bundle);
  if (!validation.ok())
    throw Error(ErrorCode::InvalidBundle, "case bundle failed validation", validation.to_string());

  const auto pre_table = mine_templates(bundle.pre_change_logs, cfg.drain);
  auto post = mine_post_change(pre_table, bundle.post_change_logs);

  std::vector<LogEvent> all_logs = bundle.pre_change_logs;
  all_logs.insert(all_logs.end(), bundle.post_change_logs.begin(), bundle.post_change_logs.end());
  const TimeSpan span{bundle.ticket.analysis_start, bundle.ticket.analysis_end + 1};

  CaseEvidence out;
  std::vector<MetricSeries> shaped = bundle.metrics;
  if (!post.table.empty() && span.start < span.end) {
    out.template_series = frequency_series(all_logs, post.table, cfg.log_window_seconds, span);
    shaped.insert(shaped.end(), out.template_series.begin(), out.template_series.end());
  }
  const auto findings = detect_findings(shaped, bundle.change_time, cfg.rules);

  std::vector<WindowComparison> comparisons;
  for (const auto& m : bundle.metrics) {
    try {
      comparisons.push_back(compare_windows(m, {span.start, bundle.change_time}, {bundle.change_time, span.end},
                                            cfg.rules));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyWindow) throw;
    }
  }

  out.evidence = DomainEvidence{bundle.ticket,  bundle.change_time, findings, comparisons,
                                post.novel,     true,               cfg.rules.material_change};
  out.domain_text = compose_domain_text(bundle, findings, comparisons, post.novel, cfg.flags,
                                        cfg.rules.material_change);
  out.rendered = render_domain_text(out.domain_text);
  return out;
}

std::string case_summary(const CaseRecord& record, double similarity) {
  const auto& r = record.report;
  const auto& gt = record.ground_truth;
  const bool erroneous = gt ? gt->erroneous : r.ecd_verdict;
  char sim[32];
  std::snprintf(sim, sizeof sim, "%.4f", similarity);
  std::string s = "#### Case " + record.case_id + " (similarity " + sim + ")\n";
  s += std::string("Verdict: ") + (erroneous ? "erroneous" : "normal") + "\n";
  if (erroneous) {
    std::optional<FaultClass> fc = gt && gt->fault_type ? gt->fault_type : r.fault_class;
    if (fc) s += "Fault class: " + display_name(*fc) + "\n";
    std::string cause = gt && gt->root_cause ? *gt->root_cause
                                             : (r.root_cause_ranking.empty() ? "" : r.root_cause_ranking[0].candidate);
    if (!cause.empty()) s += "Root cause: " + cause + "\n";
    std::string fix;
    if (gt && gt->resolution) {
      fix = *gt->resolution;
    } else if (const auto* m = r.section(CoTKind::Mitigation)) {
      const auto lines = split_lines(m->text);
      if (!lines.empty()) fix = std::string(trim(lines.front()));
    }
    if (!fix.empty()) s += "Mitigation: " + fix + "\n";
  }
  return s;
}

std::string build_system_prompt(const InferenceConfig& cfg) {
  const bool ft = cfg.tasks.count(Task::FT) > 0;
  const bool rcca = cfg.tasks.count(Task::RCCA) > 0;
  std::string s =
      "You are a senior site-reliability engineer reviewing one software change. "
      "Decide whether the change caused a failure";
  if (ft) s += ", assign the failure to a fault category";
  if (rcca) s += ", and rank the most likely root causes";
  s +=
      ". Ground every statement in the supplied evidence. Historical cases, when present, "
      "are context from earlier changes and are not the current change.\n\n"
      "Reply in exactly this format. Each marker starts a line, is uppercase and is followed by a colon.\n"
      "VERDICT: ERRONEOUS or NORMAL\n"
      "CONFIDENCE: a number between 0 and 1\n";
  if (ft) {
    s += "FAULT_CLASS: one of ResourceExhaustion, ConfigError, CodeDefect, DependencyFailure, NetworkIssue, "
         "DataIssue, or Other: <label>. Write NONE for a normal change.\n";
  }
  if (rcca) {
    s += "ROOT_CAUSES: one candidate per line as \"<n>. <root cause> | <supporting evidence>\", most likely "
         "first, at most 5. Write NONE for a normal change.\n";
  }
  s += "RECOMMENDED_ACTION: rollback, hold or proceed\n";
  if (cfg.flags.drop_cot) {
    s += "\nGive the answers only. Do not include any reasoning sections.\n";
  } else {
    s +=
        "OBSERVATION: what changed in the evidence\n"
        "ANOMALY_ANALYSIS: which signals are abnormal and why\n"
        "FAULT_CLASSIFICATION: why the fault category fits\n"
        "ROOT_CAUSE: the causal chain behind the top candidate\n"
        "MITIGATION: concrete remediation steps\n";
  }
  return s;
}

PromptPair build_prompt(const std::string& domain_text, const std::vector<RetrievedCase>& retrieved,
                        const InferenceConfig& cfg) {
  PromptPair p;
  p.system_prompt = build_system_prompt(cfg);
  if (!cfg.flags.drop_rag) {
    p.user_prompt += std::string(kRetrievedHeader) + "\n";
    if (retrieved.empty()) p.user_prompt += "none available\n";
    for (const auto& rc : retrieved) p.user_prompt += "\n" + case_summary(rc.record, rc.similarity);
    p.user_prompt += "\n";
  }
  p.user_prompt += std::string(kCurrentHeader) + "\n" + domain_text;
  return p;
}

namespace {

enum class Marker {
  Verdict,
  Confidence,
  FaultClass,
  RootCauses,
  Action,
  Observation,
  AnomalyAnalysis,
  FaultClassification,
  RootCause,
  Mitigation,
  Unknown,
};

Marker marker_kind(std::string_view name) {
  static const std::map<std::string_view, Marker> known = {
      {"VERDICT", Marker::Verdict},
      {"CONFIDENCE", Marker::Confidence},
      {"FAULT_CLASS", Marker::FaultClass},
      {"ROOT_CAUSES", Marker::RootCauses},
      {"RECOMMENDED_ACTION", Marker::Action},
      {"OBSERVATION", Marker::Observation},
      {"ANOMALY_ANALYSIS", Marker::AnomalyAnalysis},
      {"FAULT_CLASSIFICATION", Marker::FaultClassification},
      {"ROOT_CAUSE", Marker::RootCause},
      {"MITIGATION", Marker::Mitigation},
  };
  auto it = known.find(name);
  return it == known.end() ? Marker::Unknown : it->second;
}

// "NAME: rest" with NAME in [A-Z_], at least two characters.
std::optional<std::pair<std::string, std::string>> split_marker(std::string_view line) {
  auto s = trim(line);
  std::size_t i = 0;
  while (i < s.size() && ((s[i] >= 'A' && s[i] <= 'Z') || s[i] == '_')) ++i;
  if (i < 2 || i >= s.size() || s[i] != ':') return std::nullopt;
  return std::make_pair(std::string(s.substr(0, i)), std::string(trim(s.substr(i + 1))));
}

std::optional<bool> parse_verdict(std::string_view v) {
  const auto words = split_whitespace(v);
  if (words.empty()) return std::nullopt;
  auto w = to_lower(words.front());
  while (!w.empty() && !std::isalpha(static_cast<unsigned char>(w.back()))) w.pop_back();
  if (w == "erroneous" || w == "abnormal" || w == "yes" || w == "true") return true;
  if (w == "normal" || w == "no" || w == "false") return false;
  return std::nullopt;
}

std::vector<RankedCause> parse_ranking(const std::string& body, std::vector<std::string>& warnings) {
  std::vector<RankedCause> out;
  for (const auto& raw : split_lines(body)) {
    auto line = trim(raw);
    if (line.empty()) continue;
    if (normalize_answer(line) == "none") continue;
    std::size_t i = 0;
    if (line.front() == '-' || line.front() == '*') {
      i = 1;
    } else {
      while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
      if (i == 0 || i >= line.size() || (line[i] != '.' && line[i] != ')'))
        throw Error(ErrorCode::MalformedRanking, "root cause line is not a numbered entry", std::string(line));
      ++i;
    }
    auto entry = trim(line.substr(i));
    const auto bar = entry.find('|');
    RankedCause rc;
    rc.candidate = std::string(trim(entry.substr(0, bar)));
    if (bar != std::string_view::npos) rc.rationale = std::string(trim(entry.substr(bar + 1)));
    if (rc.candidate.empty())
      throw Error(ErrorCode::MalformedRanking, "root cause entry has no candidate", std::string(line));
    const auto key = normalize_answer(rc.candidate);
    const bool dup = std::any_of(out.begin(), out.end(),
                                 [&](const RankedCause& o) { return normalize_answer(o.candidate) == key; });
    if (dup) {
      warnings.push_back("duplicate root cause dropped: " + rc.candidate);
      continue;
    }
    out.push_back(std::move(rc));
  }
  if (out.size() > kMaxRankedCauses) {
    warnings.push_back("root cause ranking truncated from " + std::to_string(out.size()) + " to " +
                       std::to_string(kMaxRankedCauses));
    out.resize(kMaxRankedCauses);
  }
  return out;
}

}  // namespace

AnalysisReport parse_report(std::string_view model_output, const FaultTaxonomy& taxonomy) {
  std::map<Marker, std::string> body;
  std::vector<std::string> warnings;
  std::optional<Marker> current;
  bool skipping = false;
  for (const auto& line : split_lines(model_output)) {
    if (auto m = split_marker(line)) {
      const auto kind = marker_kind(m->first);
      if (kind == Marker::Unknown) {
        current.reset();
        skipping = true;
        continue;
      }
      if (body.count(kind)) {
        warnings.push_back("repeated marker " + m->first + " ignored");
        current.reset();
        skipping = true;
        continue;
      }
      current = kind;
      skipping = false;
      body[kind] = m->second;
      continue;
    }
    if (skipping || !current) continue;
    auto& b = body[*current];
    if (!b.empty()) b += "\n";
    b += line;
  }

  AnalysisReport r;
  r.raw_model_output = std::string(model_output);
  auto vit = body.find(Marker::Verdict);
  if (vit == body.end() || is_blank(vit->second))
    throw Error(ErrorCode::MissingSection, "model output is missing VERDICT", "VERDICT");
  const auto verdict = parse_verdict(vit->second);
  if (!verdict) throw Error(ErrorCode::ParseFailure, "unreadable VERDICT value", std::string(trim(vit->second)));
  r.ecd_verdict = *verdict;

  r.ecd_confidence = 0.5;
  if (auto it = body.find(Marker::Confidence); it != body.end()) {
    const std::string v(trim(it->second));
    char* end = nullptr;
    const double c = std::strtod(v.c_str(), &end);
    if (end != v.c_str() && std::isfinite(c)) r.ecd_confidence = std::clamp(c, 0.0, 1.0);
    else warnings.push_back("unreadable CONFIDENCE, defaulted to 0.5");
  } else {
    warnings.push_back("missing CONFIDENCE, defaulted to 0.5");
  }

  if (auto it = body.find(Marker::FaultClass); it != body.end()) {
    const auto v = trim(it->second);
    if (!v.empty() && normalize_answer(v) != "none") r.fault_class = taxonomy.classify(v);
  }
  if (auto it = body.find(Marker::RootCauses); it != body.end())
    r.root_cause_ranking = parse_ranking(it->second, warnings);

  const std::pair<Marker, CoTKind> cot_markers[] = {
      {Marker::Observation, CoTKind::Observation},
      {Marker::AnomalyAnalysis, CoTKind::AnomalyAnalysis},
      {Marker::FaultClassification, CoTKind::FaultClassification},
      {Marker::RootCause, CoTKind::RootCause},
      {Marker::Mitigation, CoTKind::Mitigation},
  };
  for (const auto& [m, k] : cot_markers) {
    auto it = body.find(m);
    if (it == body.end()) continue;
    const std::string text(trim(it->second));
    if (!text.empty()) r.cot.push_back({k, text});
  }

  if (!r.ecd_verdict) {
    if (r.fault_class || !r.root_cause_ranking.empty())
      warnings.push_back("fault class and ranking dropped for a NORMAL verdict");
    r.fault_class.reset();
    r.root_cause_ranking.clear();
  } else if (!r.fault_class) {
    warnings.push_back("ERRONEOUS verdict without FAULT_CLASS");
  }

  if (auto it = body.find(Marker::Action); it != body.end() && !is_blank(it->second)) {
    r.recommended_action = to_lower(trim(it->second));
  } else {
    r.recommended_action = r.ecd_verdict && r.ecd_confidence >= 0.5 ? "rollback" : "proceed";
  }
  r.warnings = std::move(warnings);
  return r;
}

std::string render_report(const AnalysisReport& report) {
  char conf[32];
  std::snprintf(conf, sizeof conf, "%.2f", report.ecd_confidence);
  std::string s = std::string("VERDICT: ") + (report.ecd_verdict ? "ERRONEOUS" : "NORMAL") + "\n";
  s += std::string("CONFIDENCE: ") + conf + "\n";
  s += "FAULT_CLASS: " + (report.fault_class ? display_name(*report.fault_class) : std::string("NONE")) + "\n";
  s += "ROOT_CAUSES:";
  if (report.root_cause_ranking.empty()) s += " NONE";
  for (std::size_t i = 0; i < report.root_cause_ranking.size(); ++i) {
    const auto& rc = report.root_cause_ranking[i];
    s += "\n" + std::to_string(i + 1) + ". " + rc.candidate;
    if (!rc.rationale.empty()) s += " | " + rc.rationale;
  }
  s += "\n";
  if (!report.recommended_action.empty()) s += "RECOMMENDED_ACTION: " + report.recommended_action + "\n";
  static const std::pair<CoTKind, const char*> markers[] = {
      {CoTKind::Observation, "OBSERVATION"},
      {CoTKind::AnomalyAnalysis, "ANOMALY_ANALYSIS"},
      {CoTKind::FaultClassification, "FAULT_CLASSIFICATION"},
      {CoTKind::RootCause, "ROOT_CAUSE"},
      {CoTKind::Mitigation, "MITIGATION"},
  };
  for (const auto& [k, name] : markers)
    if (const auto* sec = report.section(k)) s += std::string(name) + ":\n" + sec->text + "\n";
  return s;
}

std::string deficiency_feedback(const CoTScoreResult& score, double threshold) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "Overall reasoning score %.2f is below the required %.2f.\n", score.aggregate,
                threshold);
  std::string s = buf;
  for (auto k : kAllCoTKinds) {
    auto it = score.per_section.find(k);
    if (it == score.per_section.end()) continue;
    const bool missing = std::find(score.missing_sections.begin(), score.missing_sections.end(), k) !=
                         score.missing_sections.end();
    if (missing) {
      std::snprintf(buf, sizeof buf, "- %s: missing. Add this section.\n", std::string(to_string(k)).c_str());
    } else if (it->second < threshold) {
      std::snprintf(buf, sizeof buf, "- %s: weak (score %.2f). Tie it to specific signals in the evidence.\n",
                    std::string(to_string(k)).c_str(), it->second);
    } else {
      std::snprintf(buf, sizeof buf, "- %s: adequate (score %.2f).\n", std::string(to_string(k)).c_str(),
                    it->second);
    }
    s += buf;
  }
  s += "Rewrite the complete answer in the required format.";
  return s;
}

namespace {

std::string call_model(const LlmGateway& gateway, const std::string& system, const std::string& user,
                       int max_tokens) {
  try {
    return gateway.complete({system, user, 0.0, max_tokens});
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ModelError) throw;
    throw Error(ErrorCode::ModelError, e.what(), std::string(error_code_name(e.code())));
  }
}

bool is_parse_error(const Error& e) {
  return e.code() == ErrorCode::MissingSection || e.code() == ErrorCode::MalformedRanking ||
         e.code() == ErrorCode::ParseFailure;
}

CoTConfig gate_config(const InferenceConfig& cfg) {
  CoTConfig c = cfg.cot;
  c.threshold = cfg.cot_threshold;
  return c;
}

}  // namespace

RefineOutcome refine_report(const AnalysisReport& report, const PromptPair& prompt,
                            const std::vector<RetrievedCase>& references, const LlmGateway& gateway,
                            const InferenceConfig& cfg) {
  RefineOutcome out;
  out.report = report;
  const RetrievedCase* ref = nullptr;
  for (const auto& rc : references) {
    if (!rc.record.report.cot.empty() && rc.record.report.ecd_verdict == report.ecd_verdict) {
      ref = &rc;
      break;
    }
  }
  if (!ref) {
    out.score = CoTScoreResult::not_applicable();
    out.attempts.push_back({report.raw_model_output, 0.0, true});
    return out;
  }
  out.reference_case_id = ref->record.case_id;
  const auto gate = gate_config(cfg);
  const auto& reference = ref->record.report.cot;
  out.score = score_cot(report.cot, reference, gate, gateway);
  out.attempts.push_back({report.raw_model_output, out.score.aggregate, true});

  auto last_raw = report.raw_model_output;
  auto last_score = out.score;
  const int budget = cfg.refine ? cfg.max_rewrites : 0;
  while (out.score.aggregate < gate.threshold && out.rewrites < budget) {
    ++out.rewrites;
    const auto user = prompt.user_prompt + "\n\n" + std::string(kPreviousAnswerHeader) + "\n" + last_raw +
                      "\n\n" + std::string(kReviewerFeedbackHeader) + "\n" +
                      deficiency_feedback(last_score, gate.threshold);
    const auto raw = call_model(gateway, prompt.system_prompt, user, cfg.max_tokens);
    AnalysisReport candidate;
    try {
      candidate = parse_report(raw, cfg.taxonomy);
    } catch (const Error& e) {
      if (!is_parse_error(e)) throw;
      out.attempts.push_back({raw, 0.0, false});
      continue;
    }
    candidate.ticket_id = report.ticket_id;
    const auto score = score_cot(candidate.cot, reference, gate, gateway);
    out.attempts.push_back({raw, score.aggregate, true});
    last_raw = raw;
    last_score = score;
    if (score.aggregate > out.score.aggregate) {
      out.report = std::move(candidate);
      out.score = score;
    }
  }
  out.passed = out.score.passed;
  out.flagged_for_review = !out.passed;
  return out;
}

void to_json(Json& j, const CoTScoreResult& v) {
  Json per = Json::object(), weights = Json::object(), missing = Json::array();
  for (const auto& [k, s] : v.per_section) per[std::string(to_string(k))] = s;
  for (const auto& [k, w] : v.effective_weights) weights[std::string(to_string(k))] = w;
  for (auto k : v.missing_sections) missing.push_back(to_string(k));
  j = Json{{"per_section", per},         {"effective_weights", weights}, {"aggregate", v.aggregate},
           {"passed", v.passed},         {"applicable", v.applicable},   {"missing_sections", missing}};
}

void from_json(const Json& j, CoTScoreResult& v) {
  auto kind = [](const std::string& s) {
    auto k = parse_cot_kind(s);
    if (!k) throw Error(ErrorCode::FormatError, "unknown CoT kind " + s);
    return *k;
  };
  v = {};
  for (const auto& [k, s] : j.at("per_section").items()) v.per_section[kind(k)] = s.get<double>();
  for (const auto& [k, w] : j.at("effective_weights").items()) v.effective_weights[kind(k)] = w.get<double>();
  v.aggregate = j.at("aggregate").get<double>();
  v.passed = j.at("passed").get<bool>();
  v.applicable = j.value("applicable", true);
  for (const auto& k : j.at("missing_sections")) v.missing_sections.push_back(kind(k.get<std::string>()));
}

void to_json(Json& j, const AuditRecord& v) {
  Json retrieved = Json::array();
  for (const auto& [id, sim] : v.retrieved) retrieved.push_back({{"case_id", id}, {"similarity", sim}});
  Json attempts = Json::array();
  for (const auto& a : v.attempts)
    attempts.push_back({{"completion", a.completion}, {"aggregate", a.aggregate}, {"parsed", a.parsed}});
  j = Json{{"report_id", v.report_id},
           {"variant", v.variant},
           {"ticket_id", v.ticket_id},
           {"domain_text", v.domain_text},
           {"query", v.query},
           {"retrieved", retrieved},
           {"system_prompt", v.system_prompt},
           {"user_prompt", v.user_prompt},
           {"raw_output", v.raw_output},
           {"report", v.report},
           {"cot_score", v.cot_score},
           {"attempts", attempts},
           {"passed", v.passed},
           {"flagged_for_review", v.flagged_for_review},
           {"format_retries", v.format_retries}};
  j["reference_case_id"] = v.reference_case_id ? Json(*v.reference_case_id) : Json(nullptr);
}

void from_json(const Json& j, AuditRecord& v) {
  try {
    v = {};
    v.report_id = j.at("report_id").get<std::string>();
    v.variant = j.value("variant", "");
    v.ticket_id = j.at("ticket_id").get<std::string>();
    v.domain_text = j.at("domain_text").get<std::string>();
    v.query = j.at("query").get<std::string>();
    for (const auto& r : j.at("retrieved"))
      v.retrieved.emplace_back(r.at("case_id").get<std::string>(), r.at("similarity").get<double>());
    v.system_prompt = j.at("system_prompt").get<std::string>();
    v.user_prompt = j.at("user_prompt").get<std::string>();
    v.raw_output = j.at("raw_output").get<std::string>();
    v.report = j.at("report").get<AnalysisReport>();
    v.cot_score = j.at("cot_score").get<CoTScoreResult>();
    for (const auto& a : j.at("attempts"))
      v.attempts.push_back(
          {a.at("completion").get<std::string>(), a.at("aggregate").get<double>(), a.value("parsed", true)});
    v.passed = j.at("passed").get<bool>();
    v.flagged_for_review = j.at("flagged_for_review").get<bool>();
    v.format_retries = j.value("format_retries", 0);
    if (j.contains("reference_case_id") && !j.at("reference_case_id").is_null())
      v.reference_case_id = j.at("reference_case_id").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("audit record: ") + e.what());
  }
}

std::string make_report_id(std::string_view ticket_id, std::string_view variant) {
  if (variant.empty()) return std::string(ticket_id);
  return std::string(ticket_id) + "@" + std::string(variant);
}

AnalysisRun run_case(const CaseBundle& bundle, const KnowledgeBase* kb, const LlmGateway& gateway,
                     const InferenceConfig& cfg, std::string_view variant) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  const auto evidence = prepare_case(bundle, cfg);
  const auto query = build_query(evidence.domain_text);

  std::vector<RetrievedCase> retrieved;
  if (!cfg.flags.drop_rag && kb && !kb->empty()) retrieved = kb->retrieve(query.render(), cfg.retrieval);
  const auto prompt = build_prompt(evidence.rendered, retrieved, cfg);

  AnalysisRun run;
  auto& audit = run.audit;
  audit.report_id = make_report_id(bundle.ticket.ticket_id, variant);
  audit.variant = std::string(variant);
  audit.ticket_id = bundle.ticket.ticket_id;
  audit.domain_text = evidence.rendered;
  audit.query = query.render();
  for (const auto& rc : retrieved) audit.retrieved.emplace_back(rc.record.case_id, rc.similarity);
  audit.system_prompt = prompt.system_prompt;
  audit.user_prompt = prompt.user_prompt;

  AnalysisReport report;
  std::string user = prompt.user_prompt;
  for (;;) {
    const auto raw = call_model(gateway, prompt.system_prompt, user, cfg.max_tokens);
    try {
      report = parse_report(raw, cfg.taxonomy);
      break;
    } catch (const Error& e) {
      if (!is_parse_error(e)) throw;
      if (audit.format_retries >= cfg.max_rewrites)
        throw Error(ErrorCode::ParseFailure,
                    "model output unparseable after " + std::to_string(audit.format_retries) + " re-asks: " +
                        e.what(),
                    e.detail());
      ++audit.format_retries;
      user = prompt.user_prompt + "\n\n" + std::string(kFormatCorrectionHeader) + "\n" +
             "The previous reply could not be parsed (" + e.what() +
             "). Reply again using the required format exactly.";
    }
  }
  report.ticket_id = bundle.ticket.ticket_id;

  if (cfg.flags.drop_cot) {
    audit.cot_score = CoTScoreResult::not_applicable();
    audit.attempts.push_back({report.raw_model_output, 0.0, true});
  } else {
    auto refined = refine_report(report, prompt, retrieved, gateway, cfg);
    report = std::move(refined.report);
    audit.cot_score = refined.score;
    audit.attempts = std::move(refined.attempts);
    audit.reference_case_id = refined.reference_case_id;
    audit.passed = refined.passed;
    audit.flagged_for_review = refined.flagged_for_review;
  }

  report.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0)
                          .count();
  audit.raw_output = report.raw_model_output;
  audit.report = report;
  run.report = std::move(report);
  return run;
}

AnalysisReport analyze_case(const CaseBundle& bundle, const KnowledgeBase* kb, const LlmGateway& gateway,
                            const InferenceConfig& cfg) {
  return run_case(bundle, kb, gateway, cfg).report;
}

}  // namespace changelens
