#include "changelens/config.hpp"

#include <cstdlib>
#include <filesystem>

#include "changelens/error.hpp"
#include "changelens/text.hpp"

namespace changelens {

namespace fs = std::filesystem;

void ServiceConfig::resolve_paths() {
  const fs::path base(data_dir);
  if (kb_path.empty()) kb_path = (base / "kb.jsonl").string();
  if (audit_dir.empty()) audit_dir = (base / "audits").string();
  if (feedback_path.empty()) feedback_path = (base / "feedback.jsonl").string();
  if (cases_dir.empty()) cases_dir = (base / "cases").string();
  if (reports_dir.empty()) reports_dir = (base / "reports").string();
}

std::pair<std::string, int> ServiceConfig::host_port() const {
  const auto colon = listen_address.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == listen_address.size())
    throw Error(ErrorCode::InvalidArgument, "listen_address must be host:port", listen_address);
  const auto port_text = listen_address.substr(colon + 1);
  int port = 0;
  for (char c : port_text) {
    if (c < '0' || c > '9') throw Error(ErrorCode::InvalidArgument, "listen_address port is not a number", listen_address);
    port = port * 10 + (c - '0');
    if (port > 65535) throw Error(ErrorCode::InvalidArgument, "listen_address port out of range", listen_address);
  }
  return {listen_address.substr(0, colon), port};
}

void ServiceConfig::validate() const {
  host_port();
  if (workers < 1) throw Error(ErrorCode::InvalidArgument, "workers must be >= 1");
  if (auth_token && auth_token->empty()) throw Error(ErrorCode::InvalidArgument, "auth_token must not be empty when set");
  provider.validate();
  inference.validate();
  inference.cot.validate();
}

namespace {

template <typename T>
T field(const Json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

std::string_view backend_name(BackendKind k) { return k == BackendKind::Remote ? "remote" : "mock"; }

}  // namespace

void to_json(Json& j, const RetrievalConfig& v) { j = Json{{"k", v.k}, {"min_similarity", v.min_similarity}}; }

void from_json(const Json& j, RetrievalConfig& v) {
  v = {};
  v.k = field(j, "k", v.k);
  v.min_similarity = field(j, "min_similarity", v.min_similarity);
}

void to_json(Json& j, const CoTConfig& v) {
  Json w = Json::object();
  for (const auto& [k, x] : v.weights) w[std::string(to_string(k))] = x;
  j = Json{{"weights", w}, {"method", to_string(v.method)}, {"threshold", v.threshold}};
}

void from_json(const Json& j, CoTConfig& v) {
  v = {};
  if (j.contains("weights")) {
    v.weights.clear();
    for (const auto& [k, x] : j.at("weights").items()) {
      const auto kind = parse_cot_kind(k);
      if (!kind) throw Error(ErrorCode::FormatError, "unknown CoT section in weights: " + k);
      v.weights[*kind] = x.get<double>();
    }
  }
  if (j.contains("method")) {
    const auto m = parse_similarity_method(j.at("method").get<std::string>());
    if (!m) throw Error(ErrorCode::FormatError, "unknown similarity method " + j.at("method").get<std::string>());
    v.method = *m;
  }
  v.threshold = field(j, "threshold", v.threshold);
}

void to_json(Json& j, const ProviderConfig& v) {
  j = Json{{"backend", backend_name(v.backend)},
           {"endpoint", v.endpoint},
           {"model_name", v.model_name},
           {"transcript_path", v.transcript_path},
           {"embedding_dim", v.embedding_dim},
           {"strict", v.strict},
           {"fallback_reply", v.fallback_reply},
           {"max_inflight", v.max_inflight},
           {"max_retries", v.max_retries},
           {"backoff_ms", v.backoff_ms},
           {"timeout_seconds", v.timeout_seconds},
           {"context_tokens", v.context_tokens},
           {"audit_path", v.audit_path}};
}

void from_json(const Json& j, ProviderConfig& v) {
  v = {};
  const auto backend = to_lower(field<std::string>(j, "backend", "mock"));
  if (backend == "remote") {
    v.backend = BackendKind::Remote;
  } else if (backend == "mock" || backend == "deterministicmock") {
    v.backend = BackendKind::DeterministicMock;
  } else {
    throw Error(ErrorCode::FormatError, "provider.backend must be mock or remote", backend);
  }
  v.endpoint = field(j, "endpoint", v.endpoint);
  v.model_name = field(j, "model_name", v.model_name);
  v.api_key = field(j, "api_key", v.api_key);
  v.transcript_path = field(j, "transcript_path", v.transcript_path);
  v.embedding_dim = field(j, "embedding_dim", v.embedding_dim);
  v.strict = field(j, "strict", v.strict);
  v.fallback_reply = field(j, "fallback_reply", v.fallback_reply);
  v.max_inflight = field(j, "max_inflight", v.max_inflight);
  v.max_retries = field(j, "max_retries", v.max_retries);
  v.backoff_ms = field(j, "backoff_ms", v.backoff_ms);
  v.timeout_seconds = field(j, "timeout_seconds", v.timeout_seconds);
  v.context_tokens = field(j, "context_tokens", v.context_tokens);
  v.audit_path = field(j, "audit_path", v.audit_path);
}

void to_json(Json& j, const InferenceConfig& v) {
  Json tasks = Json::array();
  for (auto t : v.tasks) tasks.push_back(to_string(t));
  Json aliases = Json::object();
  for (const auto& [a, k] : v.taxonomy.aliases) aliases[a] = to_string(k);
  j = Json{{"retrieval", v.retrieval},
           {"flags", v.flags},
           {"cot_threshold", v.cot_threshold},
           {"max_rewrites", v.max_rewrites},
           {"refine", v.refine},
           {"tasks", tasks},
           {"drain", v.drain},
           {"rules", v.rules},
           {"log_window_seconds", v.log_window_seconds},
           {"fault_aliases", aliases},
           {"max_tokens", v.max_tokens}};
}

void from_json(const Json& j, InferenceConfig& v) {
  v = {};
  if (j.contains("retrieval")) v.retrieval = j.at("retrieval").get<RetrievalConfig>();
  if (j.contains("flags")) v.flags = j.at("flags").get<AblationFlags>();
  v.cot_threshold = field(j, "cot_threshold", v.cot_threshold);
  v.max_rewrites = field(j, "max_rewrites", v.max_rewrites);
  v.refine = field(j, "refine", v.refine);
  if (j.contains("tasks")) {
    v.tasks.clear();
    for (const auto& t : j.at("tasks")) {
      const auto task = parse_task(t.get<std::string>());
      if (!task) throw Error(ErrorCode::FormatError, "unknown task " + t.get<std::string>());
      v.tasks.insert(*task);
    }
  }
  if (j.contains("drain")) v.drain = j.at("drain").get<DrainConfig>();
  if (j.contains("rules")) v.rules = j.at("rules").get<PatternRuleConfig>();
  v.log_window_seconds = field(j, "log_window_seconds", v.log_window_seconds);
  if (j.contains("fault_aliases")) {
    for (const auto& [alias, kind] : j.at("fault_aliases").items()) {
      const auto k = parse_fault_kind(kind.get<std::string>());
      if (!k) throw Error(ErrorCode::FormatError, "unknown fault kind for alias " + alias);
      v.taxonomy.aliases[to_lower(alias)] = *k;
    }
  }
  v.max_tokens = field(j, "max_tokens", v.max_tokens);
}

void to_json(Json& j, const ServiceConfig& v) {
  Json cot = v.inference.cot;
  cot["threshold"] = v.inference.cot_threshold;
  j = Json{{"listen_address", v.listen_address},
           {"data_dir", v.data_dir},
           {"kb_path", v.kb_path},
           {"audit_dir", v.audit_dir},
           {"feedback_path", v.feedback_path},
           {"cases_dir", v.cases_dir},
           {"reports_dir", v.reports_dir},
           {"provider", v.provider},
           {"inference", v.inference},
           {"cot", cot},
           {"workers", v.workers}};
}

void from_json(const Json& j, ServiceConfig& v) {
  try {
    v = {};
    v.listen_address = field(j, "listen_address", v.listen_address);
    v.data_dir = field(j, "data_dir", v.data_dir);
    v.kb_path = field(j, "kb_path", v.kb_path);
    v.audit_dir = field(j, "audit_dir", v.audit_dir);
    v.feedback_path = field(j, "feedback_path", v.feedback_path);
    v.cases_dir = field(j, "cases_dir", v.cases_dir);
    v.reports_dir = field(j, "reports_dir", v.reports_dir);
    if (j.contains("provider")) v.provider = j.at("provider").get<ProviderConfig>();
    if (j.contains("inference")) v.inference = j.at("inference").get<InferenceConfig>();
    if (j.contains("cot")) {
      v.inference.cot = j.at("cot").get<CoTConfig>();
      v.inference.cot_threshold = v.inference.cot.threshold;
    }
    if (j.contains("auth_token") && !j.at("auth_token").is_null()) v.auth_token = j.at("auth_token").get<std::string>();
    v.workers = field(j, "workers", v.workers);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("config: ") + e.what());
  }
}

ServiceConfig load_config(const std::string& path) {
  auto cfg = read_json_file(path).get<ServiceConfig>();
  const auto base = fs::path(path).parent_path();
  auto anchor = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  anchor(cfg.data_dir);
  cfg.resolve_paths();
  for (auto* p : {&cfg.kb_path, &cfg.audit_dir, &cfg.feedback_path, &cfg.cases_dir, &cfg.reports_dir,
                  &cfg.provider.transcript_path, &cfg.provider.audit_path})
    anchor(*p);
  cfg.provider.apply_env();
  if (const char* t = std::getenv("CHANGELENS_AUTH_TOKEN"); t && *t) cfg.auth_token = t;
  cfg.validate();
  return cfg;
}

}  // namespace changelens
