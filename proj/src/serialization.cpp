#include "changelens/serialization.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "changelens/error.hpp"

namespace changelens {

namespace {

template <typename T>
T req(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw Error(ErrorCode::FormatError, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
T opt(const Json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
std::optional<T> opt_field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return req<T>(j, key);
}

template <typename E, typename Parse>
E req_enum(const Json& j, const char* key, Parse parse) {
  const auto s = req<std::string>(j, key);
  if (auto v = parse(s)) return *v;
  throw Error(ErrorCode::FormatError, std::string("field '") + key + "': unknown value '" + s + "'");
}

}  // namespace

void to_json(Json& j, const FaultClass& v) { j = display_name(v); }

void from_json(const Json& j, FaultClass& v) {
  if (!j.is_string()) throw Error(ErrorCode::FormatError, "fault class must be a string");
  v = FaultTaxonomy{}.classify(j.get<std::string>());
}

void to_json(Json& j, const ChangeTicket& v) {
  j = Json{{"ticket_id", v.ticket_id},
           {"service", v.service},
           {"change_type", to_string(v.change_type)},
           {"submit_time", v.submit_time},
           {"analysis_start", v.analysis_start},
           {"analysis_end", v.analysis_end},
           {"description", v.description},
           {"status", to_string(v.status)}};
}

void from_json(const Json& j, ChangeTicket& v) {
  v.ticket_id = req<std::string>(j, "ticket_id");
  v.service = opt<std::string>(j, "service", "");
  v.change_type = j.contains("change_type") ? req_enum<ChangeType>(j, "change_type", parse_change_type)
                                            : ChangeType::Other;
  v.submit_time = req<EpochSeconds>(j, "submit_time");
  v.analysis_start = req<EpochSeconds>(j, "analysis_start");
  v.analysis_end = req<EpochSeconds>(j, "analysis_end");
  v.description = opt<std::string>(j, "description", "");
  v.status = j.contains("status") ? req_enum<TicketStatus>(j, "status", parse_ticket_status)
                                  : TicketStatus::Pending;
}

void to_json(Json& j, const MetricSeries& v) {
  j = Json{{"name", v.name}, {"unit", v.unit}, {"timestamps", v.timestamps}, {"values", v.values}};
}

void from_json(const Json& j, MetricSeries& v) {
  v.name = req<std::string>(j, "name");
  v.unit = opt<std::string>(j, "unit", "");
  v.timestamps = req<std::vector<EpochSeconds>>(j, "timestamps");
  v.values = req<std::vector<double>>(j, "values");
}

void to_json(Json& j, const LogEvent& v) { j = Json{{"timestamp", v.timestamp}, {"message", v.message}}; }

void from_json(const Json& j, LogEvent& v) {
  v.timestamp = req<EpochSeconds>(j, "timestamp");
  v.message = req<std::string>(j, "message");
}

void to_json(Json& j, const GroundTruth& v) {
  j = Json{{"erroneous", v.erroneous}};
  j["fault_type"] = v.fault_type ? Json(*v.fault_type) : Json(nullptr);
  j["root_cause"] = v.root_cause ? Json(*v.root_cause) : Json(nullptr);
  j["resolution"] = v.resolution ? Json(*v.resolution) : Json(nullptr);
}

void from_json(const Json& j, GroundTruth& v) {
  v.erroneous = req<bool>(j, "erroneous");
  v.fault_type = opt_field<FaultClass>(j, "fault_type");
  v.root_cause = opt_field<std::string>(j, "root_cause");
  v.resolution = opt_field<std::string>(j, "resolution");
}

void to_json(Json& j, const CaseBundle& v) {
  j = Json{{"ticket", v.ticket},
           {"metrics", v.metrics},
           {"pre_change_logs", v.pre_change_logs},
           {"post_change_logs", v.post_change_logs},
           {"change_time", v.change_time}};
  j["ground_truth"] = v.ground_truth ? Json(*v.ground_truth) : Json(nullptr);
}

void from_json(const Json& j, CaseBundle& v) {
  v.ticket = req<ChangeTicket>(j, "ticket");
  v.metrics = opt<std::vector<MetricSeries>>(j, "metrics", {});
  v.pre_change_logs = opt<std::vector<LogEvent>>(j, "pre_change_logs", {});
  v.post_change_logs = opt<std::vector<LogEvent>>(j, "post_change_logs", {});
  v.change_time = req<EpochSeconds>(j, "change_time");
  v.ground_truth = opt_field<GroundTruth>(j, "ground_truth");
}

void to_json(Json& j, const CoTSection& v) { j = Json{{"kind", to_string(v.kind)}, {"text", v.text}}; }

void from_json(const Json& j, CoTSection& v) {
  v.kind = req_enum<CoTKind>(j, "kind", parse_cot_kind);
  v.text = req<std::string>(j, "text");
}

void to_json(Json& j, const RankedCause& v) {
  j = Json{{"candidate", v.candidate}, {"rationale", v.rationale}};
}

void from_json(const Json& j, RankedCause& v) {
  v.candidate = req<std::string>(j, "candidate");
  v.rationale = opt<std::string>(j, "rationale", "");
}

void to_json(Json& j, const AnalysisReport& v) {
  j = Json{{"ticket_id", v.ticket_id},
           {"ecd_verdict", v.ecd_verdict},
           {"ecd_confidence", v.ecd_confidence},
           {"root_cause_ranking", v.root_cause_ranking},
           {"cot", v.cot},
           {"raw_model_output", v.raw_model_output},
           {"elapsed_ms", v.elapsed_ms},
           {"recommended_action", v.recommended_action},
           {"warnings", v.warnings}};
  j["fault_class"] = v.fault_class ? Json(*v.fault_class) : Json(nullptr);
}

void from_json(const Json& j, AnalysisReport& v) {
  v.ticket_id = req<std::string>(j, "ticket_id");
  v.ecd_verdict = req<bool>(j, "ecd_verdict");
  v.ecd_confidence = opt<double>(j, "ecd_confidence", 0.0);
  v.fault_class = opt_field<FaultClass>(j, "fault_class");
  v.root_cause_ranking = opt<std::vector<RankedCause>>(j, "root_cause_ranking", {});
  v.cot = opt<std::vector<CoTSection>>(j, "cot", {});
  v.raw_model_output = opt<std::string>(j, "raw_model_output", "");
  v.elapsed_ms = opt<std::int64_t>(j, "elapsed_ms", 0);
  v.recommended_action = opt<std::string>(j, "recommended_action", "");
  v.warnings = opt<std::vector<std::string>>(j, "warnings", {});
}

void to_json(Json& j, const AnomalyFinding& v) {
  j = Json{{"source", v.source},       {"pattern", to_string(v.pattern)}, {"start", v.start},
           {"end", v.end},             {"magnitude", v.magnitude},        {"description", v.description}};
}

void to_json(Json& j, const WindowComparison& v) {
  auto stats = [](const WindowStats& s) { return Json{{"max", s.max}, {"min", s.min}, {"mean", s.mean}}; };
  j = Json{{"source", v.source},         {"unit", v.unit},
           {"before", stats(v.before)},  {"after", stats(v.after)},
           {"delta_max", v.delta_max},   {"delta_min", v.delta_min},
           {"delta_mean", v.delta_mean}, {"summary", v.summary}};
}

void to_json(Json& j, const DrainConfig& v) {
  j = Json{{"tree_depth", v.tree_depth},
           {"similarity_threshold", v.similarity_threshold},
           {"max_children", v.max_children}};
}

void from_json(const Json& j, DrainConfig& v) {
  DrainConfig d;
  v.tree_depth = opt<int>(j, "tree_depth", d.tree_depth);
  v.similarity_threshold = opt<double>(j, "similarity_threshold", d.similarity_threshold);
  v.max_children = opt<int>(j, "max_children", d.max_children);
}

void to_json(Json& j, const PatternRuleConfig& v) {
  j = Json{{"spike_z", v.spike_z},
           {"shift_z", v.shift_z},
           {"slope_min", v.slope_min},
           {"var_ratio", v.var_ratio},
           {"step_rise_fraction", v.step_rise_fraction},
           {"epsilon", v.epsilon},
           {"material_change", v.material_change},
           {"min_points", v.min_points}};
}

void from_json(const Json& j, PatternRuleConfig& v) {
  PatternRuleConfig d;
  v.spike_z = opt<double>(j, "spike_z", d.spike_z);
  v.shift_z = opt<double>(j, "shift_z", d.shift_z);
  v.slope_min = opt<double>(j, "slope_min", d.slope_min);
  v.var_ratio = opt<double>(j, "var_ratio", d.var_ratio);
  v.step_rise_fraction = opt<double>(j, "step_rise_fraction", d.step_rise_fraction);
  v.epsilon = opt<double>(j, "epsilon", d.epsilon);
  v.material_change = opt<double>(j, "material_change", d.material_change);
  v.min_points = opt<std::size_t>(j, "min_points", d.min_points);
}

void to_json(Json& j, const AblationFlags& v) {
  j = Json{{"drop_descriptions", v.drop_descriptions},
           {"drop_detector", v.drop_detector},
           {"drop_rag", v.drop_rag},
           {"drop_cot", v.drop_cot}};
}

void from_json(const Json& j, AblationFlags& v) {
  v.drop_descriptions = opt<bool>(j, "drop_descriptions", false);
  v.drop_detector = opt<bool>(j, "drop_detector", false);
  v.drop_rag = opt<bool>(j, "drop_rag", false);
  v.drop_cot = opt<bool>(j, "drop_cot", false);
}

void to_json(Json& j, const EmbeddingVector& v) {
  Json idx = Json::array(), val = Json::array();
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    if (v.values[i] == 0.0) continue;
    idx.push_back(i);
    val.push_back(v.values[i]);
  }
  j = Json{{"dim", v.values.size()}, {"idx", std::move(idx)}, {"val", std::move(val)}};
}

void from_json(const Json& j, EmbeddingVector& v) {
  const auto dim = req<std::size_t>(j, "dim");
  const auto idx = req<std::vector<std::size_t>>(j, "idx");
  const auto val = req<std::vector<double>>(j, "val");
  if (idx.size() != val.size()) throw Error(ErrorCode::FormatError, "embedding idx/val length mismatch");
  v.values.assign(dim, 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= dim) throw Error(ErrorCode::FormatError, "embedding index out of range");
    v.values[idx[i]] = val[i];
  }
}

Json export_template_table(const TemplateTable& table) {
  Json templates = Json::array();
  for (const auto& t : table.templates()) {
    templates.push_back({{"template_id", t.template_id},
                         {"template", t.text()},
                         {"support", t.support},
                         {"novel", t.novel},
                         {"representative", t.representative}});
  }
  return Json{{"config", table.config()}, {"templates", std::move(templates)}};
}

Json canonical_report_json(const AnalysisReport& report) {
  Json j = report;
  j.erase("elapsed_ms");
  return j;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, path + ": " + e.what());
  }
}

void write_text_file_atomic(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw Error(ErrorCode::IoError, "rename " + tmp.string() + ": " + ec.message());
}

void write_json_file(const std::string& path, const Json& doc, int indent) {
  write_text_file_atomic(path, doc.dump(indent) + "\n");
}

CaseBundle load_bundle(const std::string& path) {
  try {
    return read_json_file(path).get<CaseBundle>();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::FormatError)
      throw Error(ErrorCode::FormatError, path + ": " + e.what(), e.detail());
    throw;
  }
}

void save_bundle(const std::string& path, const CaseBundle& bundle) { write_json_file(path, Json(bundle)); }

}  // namespace changelens
