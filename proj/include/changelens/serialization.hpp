#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "changelens/domain_text.hpp"
#include "changelens/llm_gateway.hpp"
#include "changelens/log_miner.hpp"
#include "changelens/metric_prep.hpp"
#include "changelens/types.hpp"

// JSON mappings for every persisted or wire-visible type. Field names follow
// the struct members; enums are written as their names. Malformed input
// raises Error(FormatError) through the from_json overloads.
namespace changelens {

using Json = nlohmann::json;

void to_json(Json& j, const FaultClass& v);
void from_json(const Json& j, FaultClass& v);
void to_json(Json& j, const ChangeTicket& v);
void from_json(const Json& j, ChangeTicket& v);
void to_json(Json& j, const MetricSeries& v);
void from_json(const Json& j, MetricSeries& v);
void to_json(Json& j, const LogEvent& v);
void from_json(const Json& j, LogEvent& v);
void to_json(Json& j, const GroundTruth& v);
void from_json(const Json& j, GroundTruth& v);
void to_json(Json& j, const CaseBundle& v);
void from_json(const Json& j, CaseBundle& v);
void to_json(Json& j, const CoTSection& v);
void from_json(const Json& j, CoTSection& v);
void to_json(Json& j, const RankedCause& v);
void from_json(const Json& j, RankedCause& v);
void to_json(Json& j, const AnalysisReport& v);
void from_json(const Json& j, AnalysisReport& v);
void to_json(Json& j, const AnomalyFinding& v);
void to_json(Json& j, const WindowComparison& v);
void to_json(Json& j, const DrainConfig& v);
void from_json(const Json& j, DrainConfig& v);
void to_json(Json& j, const PatternRuleConfig& v);
void from_json(const Json& j, PatternRuleConfig& v);
void to_json(Json& j, const AblationFlags& v);
void from_json(const Json& j, AblationFlags& v);

// Sparse form: {"dim": n, "idx": [...], "val": [...]}.
void to_json(Json& j, const EmbeddingVector& v);
void from_json(const Json& j, EmbeddingVector& v);

// {"config": {...}, "templates": [{"template_id", "template", "support", "novel", "representative"}]}
Json export_template_table(const TemplateTable& table);

// Report JSON with runtime-only fields (elapsed_ms) removed; used wherever
// two runs are compared for byte equality.
Json canonical_report_json(const AnalysisReport& report);

Json read_json_file(const std::string& path);
// Writes to a sibling temp file and renames, so readers never see a partial file.
void write_json_file(const std::string& path, const Json& doc, int indent = 2);
void write_text_file_atomic(const std::string& path, const std::string& text);

CaseBundle load_bundle(const std::string& path);
void save_bundle(const std::string& path, const CaseBundle& bundle);

}  // namespace changelens
