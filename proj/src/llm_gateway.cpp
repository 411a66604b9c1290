#include "changelens/llm_gateway.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "changelens/error.hpp"
#include "changelens/kernels.hpp"
#include "changelens/text.hpp"

namespace changelens {

using nlohmann::json;

void ChatRequest::validate() const {
  if (is_blank(system_prompt) || is_blank(user_prompt))
    throw Error(ErrorCode::InvalidArgument, "chat request: prompts must be non-empty");
  if (!(temperature >= 0.0)) throw Error(ErrorCode::InvalidArgument, "chat request: temperature < 0");
  if (max_tokens <= 0) throw Error(ErrorCode::InvalidArgument, "chat request: max_tokens must be positive");
}

EmbeddingVector EmbeddingVector::normalized(std::vector<double> raw) {
  double ss = 0.0;
  for (double v : raw) ss += v * v;
  if (!(ss > 0.0)) throw Error(ErrorCode::EmptyText, "embedding: zero vector");
  const double inv = 1.0 / std::sqrt(ss);
  for (double& v : raw) v *= inv;
  return EmbeddingVector{std::move(raw)};
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension())
    throw Error(ErrorCode::DimensionMismatch, "cosine: embedding dimensions differ");
  return kernels::cosine(a.values, b.values);
}

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dim_(dimension) {
  if (dim_ == 0) throw Error(ErrorCode::InvalidArgument, "embedding_dim must be positive");
}

std::size_t HashingEmbedder::bucket(std::string_view token) const {
  return static_cast<std::size_t>(fnv1a64(token) % dim_);
}

EmbeddingVector HashingEmbedder::embed(std::string_view text) const {
  const auto tokens = word_tokens(text);
  if (tokens.empty()) throw Error(ErrorCode::EmptyText, "embed: text has no tokens");
  std::vector<double> v(dim_, 0.0);
  for (const auto& t : tokens) v[bucket(t)] += 1.0;
  return EmbeddingVector::normalized(std::move(v));
}

void ProviderConfig::validate() const {
  if (backend == BackendKind::Remote && endpoint.empty())
    throw Error(ErrorCode::InvalidArgument, "provider: Remote backend requires endpoint");
  if (backend == BackendKind::DeterministicMock && transcript_path.empty())
    throw Error(ErrorCode::InvalidArgument, "provider: mock backend requires transcript_path");
  if (embedding_dim == 0) throw Error(ErrorCode::InvalidArgument, "provider: embedding_dim must be positive");
  if (max_inflight < 1) throw Error(ErrorCode::InvalidArgument, "provider: max_inflight must be >= 1");
  if (max_retries < 0) throw Error(ErrorCode::InvalidArgument, "provider: max_retries must be >= 0");
}

void ProviderConfig::apply_env() {
  if (const char* v = std::getenv("CHANGELENS_LLM_ENDPOINT"); v && *v) endpoint = v;
  if (const char* v = std::getenv("CHANGELENS_LLM_API_KEY"); v && *v) api_key = v;
  if (const char* v = std::getenv("CHANGELENS_LLM_MODEL"); v && *v) model_name = v;
}

std::string prompt_hash(std::string_view system_prompt, std::string_view user_prompt) {
  // Length-prefixing keeps ("ab","c") and ("a","bc") apart.
  std::string key = std::to_string(system_prompt.size()) + ":";
  key += system_prompt;
  key += std::to_string(user_prompt.size()) + ":";
  key += user_prompt;
  return hex64(fnv1a64(key));
}

Transcript Transcript::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open transcript " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, "transcript " + path + ": " + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorCode::FormatError, "transcript must be a JSON list");
  Transcript t;
  for (const auto& rec : doc) {
    if (!rec.contains("prompt_hash") || !rec.contains("reply"))
      throw Error(ErrorCode::FormatError, "transcript record needs prompt_hash and reply");
    t.add(rec.at("prompt_hash").get<std::string>(), rec.at("reply").get<std::string>());
  }
  return t;
}

void Transcript::save(const std::string& path) const {
  json doc = json::array();
  for (const auto& [h, r] : replies_) doc.push_back({{"prompt_hash", h}, {"reply", r}});
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write transcript " + path);
  out << doc.dump(1) << "\n";
}

void Transcript::add(const std::string& hash, std::string reply) { replies_[hash] = std::move(reply); }

const std::string* Transcript::find(const std::string& hash) const {
  auto it = replies_.find(hash);
  return it == replies_.end() ? nullptr : &it->second;
}

void Transcript::merge(const Transcript& other) {
  for (const auto& [h, r] : other.replies_) replies_[h] = r;
}

MockBackend::MockBackend(Transcript transcript, std::size_t dim, bool strict, std::string fallback_reply)
    : transcript_(std::move(transcript)), embedder_(dim), strict_(strict), fallback_(std::move(fallback_reply)) {}

std::string MockBackend::complete(const ChatRequest& request) {
  const auto h = prompt_hash(request.system_prompt, request.user_prompt);
  if (const auto* reply = transcript_.find(h)) return *reply;
  if (strict_) throw Error(ErrorCode::UnscriptedPrompt, "no transcript entry for prompt " + h, h);
  return fallback_;
}

namespace {

struct Url {
  std::string origin;  // scheme://host:port
  std::string path;    // without trailing slash
};

Url split_url(const std::string& endpoint) {
  const auto scheme_end = endpoint.find("://");
  const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto slash = endpoint.find('/', host_start);
  Url u;
  u.origin = slash == std::string::npos ? endpoint : endpoint.substr(0, slash);
  u.path = slash == std::string::npos ? "" : endpoint.substr(slash);
  while (!u.path.empty() && u.path.back() == '/') u.path.pop_back();
  return u;
}

json post_json(const ProviderConfig& cfg, const std::string& suffix, const json& body) {
  const auto url = split_url(cfg.endpoint);
  httplib::Client cli(url.origin);
  cli.set_connection_timeout(cfg.timeout_seconds, 0);
  cli.set_read_timeout(cfg.timeout_seconds, 0);
  httplib::Headers headers;
  if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);
  auto res = cli.Post(url.path + suffix, headers, body.dump(), "application/json");
  if (!res)
    throw Error(ErrorCode::TransportError,
                "POST " + cfg.endpoint + suffix + " failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw Error(ErrorCode::TransportError, "POST " + suffix + " returned HTTP " + std::to_string(res->status));
  if (res->status != 200)
    throw Error(ErrorCode::ModelError, "POST " + suffix + " returned HTTP " + std::to_string(res->status),
                res->body);
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ModelError, std::string("malformed provider response: ") + e.what());
  }
}

}  // namespace

RemoteBackend::RemoteBackend(ProviderConfig config) : config_(std::move(config)) {}

std::string RemoteBackend::complete(const ChatRequest& request) {
  const json body = {
      {"model", config_.model_name},
      {"messages",
       json::array({{{"role", "system"}, {"content", request.system_prompt}},
                    {{"role", "user"}, {"content", request.user_prompt}}})},
      {"temperature", request.temperature},
      {"max_tokens", request.max_tokens},
      {"stream", false},
  };
  const auto res = post_json(config_, "/chat/completions", body);
  try {
    return res.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ModelError, std::string("chat response missing content: ") + e.what());
  }
}

EmbeddingVector RemoteBackend::embed(std::string_view text) {
  if (is_blank(text)) throw Error(ErrorCode::EmptyText, "embed: empty text");
  const json body = {{"model", config_.model_name}, {"input", std::string(text)}};
  const auto res = post_json(config_, "/embeddings", body);
  std::vector<double> v;
  try {
    v = res.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ModelError, std::string("embedding response malformed: ") + e.what());
  }
  if (v.size() != config_.embedding_dim)
    throw Error(ErrorCode::DimensionMismatch, "provider embedding dimension " + std::to_string(v.size()) +
                                                  " != configured " + std::to_string(config_.embedding_dim));
  return EmbeddingVector::normalized(std::move(v));
}

std::unique_ptr<ChatBackend> make_backend(const ProviderConfig& config) {
  config.validate();
  if (config.backend == BackendKind::Remote) return std::make_unique<RemoteBackend>(config);
  return std::make_unique<MockBackend>(Transcript::load(config.transcript_path), config.embedding_dim,
                                       config.strict, config.fallback_reply);
}

LlmGateway::LlmGateway(ProviderConfig config)
    : LlmGateway(config, std::shared_ptr<ChatBackend>(make_backend(config))) {}

LlmGateway::LlmGateway(ProviderConfig config, std::shared_ptr<ChatBackend> backend)
    : config_(std::move(config)), backend_(std::move(backend)), slots_(std::max(1, config_.max_inflight)) {}

namespace {
class SlotGuard {
 public:
  SlotGuard(std::counting_semaphore<1024>& s, std::atomic<int>& inflight, std::atomic<int>& peak)
      : s_(s), inflight_(inflight) {
    s_.acquire();
    const int now = ++inflight_;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
  }
  ~SlotGuard() {
    --inflight_;
    s_.release();
  }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<1024>& s_;
  std::atomic<int>& inflight_;
};
}  // namespace

std::string LlmGateway::complete(const ChatRequest& request) const {
  request.validate();
  const std::size_t prompt_tokens = (request.system_prompt.size() + request.user_prompt.size() + 3) / 4;
  if (prompt_tokens + static_cast<std::size_t>(request.max_tokens) > config_.context_tokens)
    throw Error(ErrorCode::TokenLimit, "prompt of ~" + std::to_string(prompt_tokens) +
                                           " tokens exceeds context of " + std::to_string(config_.context_tokens));
  ++calls_;
  SlotGuard guard(slots_, inflight_, peak_);
  int attempt = 0;
  for (;;) {
    ++attempt;
    try {
      auto reply = backend_->complete(request);
      audit(request, &reply, {}, attempt);
      return reply;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TransportError || attempt > config_.max_retries) {
        audit(request, nullptr, e.what(), attempt);
        if (e.code() == ErrorCode::TransportError)
          throw Error(ErrorCode::TransportError,
                      std::string(e.what()) + " (after " + std::to_string(attempt - 1) + " retries)");
        throw;
      }
      const auto delay = std::chrono::milliseconds(static_cast<long long>(config_.backoff_ms) << (attempt - 1));
      std::this_thread::sleep_for(delay);
    }
  }
}

EmbeddingVector LlmGateway::embed(std::string_view text) const {
  if (is_blank(text)) throw Error(ErrorCode::EmptyText, "embed: empty text");
  int attempt = 0;
  for (;;) {
    ++attempt;
    try {
      return backend_->embed(text);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TransportError || attempt > config_.max_retries) throw;
      std::this_thread::sleep_for(
          std::chrono::milliseconds(static_cast<long long>(config_.backoff_ms) << (attempt - 1)));
    }
  }
}

void LlmGateway::audit(const ChatRequest& request, const std::string* reply, const std::string& error,
                       int attempts) const {
  if (config_.audit_path.empty()) return;
  json rec = {
      {"backend", std::string(backend_->name())},
      {"model", config_.model_name},
      {"prompt_hash", prompt_hash(request.system_prompt, request.user_prompt)},
      {"system_prompt", request.system_prompt},
      {"user_prompt", request.user_prompt},
      {"attempts", attempts},
  };
  if (reply) rec["reply"] = *reply;
  else rec["error"] = error;
  std::lock_guard lock(audit_mutex_);
  std::ofstream out(config_.audit_path, std::ios::app);
  out << rec.dump() << "\n";
}

std::string complete(const ChatRequest& request, const ProviderConfig& config) {
  return LlmGateway(config).complete(request);
}

EmbeddingVector embed(std::string_view text, const ProviderConfig& config) {
  return LlmGateway(config).embed(text);
}

}  // namespace changelens
