#pragma once

#include <optional>
#include <string>
#include <utility>

#include "changelens/cotscore.hpp"
#include "changelens/inference.hpp"
#include "changelens/knowledge_base.hpp"
#include "changelens/llm_gateway.hpp"
#include "changelens/serialization.hpp"

namespace changelens {

// One JSON file configures the CLI and the service. Relative paths resolve
// against the directory of the config file.
struct ServiceConfig {
  std::string listen_address = "127.0.0.1:8080";
  std::string data_dir = "changelens-data";
  std::string kb_path;        // default <data_dir>/kb.jsonl
  std::string audit_dir;      // default <data_dir>/audits
  std::string feedback_path;  // default <data_dir>/feedback.jsonl
  std::string cases_dir;      // default <data_dir>/cases
  std::string reports_dir;    // default <data_dir>/reports
  ProviderConfig provider;
  InferenceConfig inference;  // inference.cot is the CoTScore configuration
  std::optional<std::string> auth_token;
  int workers = 2;

  // Fills empty paths from data_dir.
  void resolve_paths();
  // Throws Error(InvalidArgument) on a bad listen address, workers < 1, or
  // invalid provider / inference / CoTScore settings.
  void validate() const;
  std::pair<std::string, int> host_port() const;
};

void to_json(Json& j, const RetrievalConfig& v);
void from_json(const Json& j, RetrievalConfig& v);
void to_json(Json& j, const CoTConfig& v);
void from_json(const Json& j, CoTConfig& v);
void to_json(Json& j, const ProviderConfig& v);
void from_json(const Json& j, ProviderConfig& v);
void to_json(Json& j, const InferenceConfig& v);
void from_json(const Json& j, InferenceConfig& v);
// The auth token is never written back out.
void to_json(Json& j, const ServiceConfig& v);
void from_json(const Json& j, ServiceConfig& v);

// Reads, resolves paths, applies env overrides (CHANGELENS_AUTH_TOKEN and the
// provider variables) and validates.
ServiceConfig load_config(const std::string& path);

}  // namespace changelens
