#pragma once

#include <atomic>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

namespace changelens {

struct ChatRequest {
  std::string system_prompt;
  std::string user_prompt;
  double temperature = 0.0;
  int max_tokens = 1024;

  void validate() const;
};

// L2-normalized on creation.
struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }
  // Throws Error(EmptyText) for an all-zero input.
  static EmbeddingVector normalized(std::vector<double> raw);
  bool operator==(const EmbeddingVector&) const = default;
};

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  virtual std::size_t dimension() const = 0;
};

// Hashed bag of words: each lowercase word token goes to an FNV-1a bucket.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 1024);
  EmbeddingVector embed(std::string_view text) const override;
  std::size_t dimension() const override { return dim_; }
  std::size_t bucket(std::string_view token) const;

 private:
  std::size_t dim_;
};

enum class BackendKind { Remote, DeterministicMock };

struct ProviderConfig {
  BackendKind backend = BackendKind::DeterministicMock;
  std::string endpoint;  // base URL, e.g. http://localhost:8000/v1
  std::string model_name = "mock";
  std::string api_key;
  std::string transcript_path;
  std::size_t embedding_dim = 1024;
  bool strict = true;          // mock: unscripted prompts are errors
  std::string fallback_reply;  // mock, non-strict
  int max_inflight = 4;
  int max_retries = 3;
  int backoff_ms = 200;
  int timeout_seconds = 60;
  std::size_t context_tokens = 32768;
  std::string audit_path;  // JSONL audit of every call when non-empty

  // Throws Error(InvalidArgument) on Remote without endpoint or Mock without transcript.
  void validate() const;
  // CHANGELENS_LLM_ENDPOINT / CHANGELENS_LLM_API_KEY / CHANGELENS_LLM_MODEL.
  void apply_env();
};

// Stable transcript key for a (system, user) prompt pair.
std::string prompt_hash(std::string_view system_prompt, std::string_view user_prompt);

// Scripted replies keyed by prompt hash. File format: JSON list of
// {"prompt_hash": ..., "reply": ...} records.
class Transcript {
 public:
  static Transcript load(const std::string& path);
  void save(const std::string& path) const;

  void add(const std::string& hash, std::string reply);
  const std::string* find(const std::string& hash) const;
  std::size_t size() const { return replies_.size(); }
  const std::map<std::string, std::string>& entries() const { return replies_; }
  void merge(const Transcript& other);

 private:
  std::map<std::string, std::string> replies_;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual EmbeddingVector embed(std::string_view text) = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string_view name() const = 0;
};

class MockBackend final : public ChatBackend {
 public:
  MockBackend(Transcript transcript, std::size_t dim, bool strict, std::string fallback_reply = {});
  std::string complete(const ChatRequest& request) override;
  EmbeddingVector embed(std::string_view text) override { return embedder_.embed(text); }
  std::size_t dimension() const override { return embedder_.dimension(); }
  std::string_view name() const override { return "mock"; }

 private:
  Transcript transcript_;
  HashingEmbedder embedder_;
  bool strict_;
  std::string fallback_;
};

// OpenAI-style chat-completions / embeddings over HTTP.
class RemoteBackend final : public ChatBackend {
 public:
  explicit RemoteBackend(ProviderConfig config);
  std::string complete(const ChatRequest& request) override;
  EmbeddingVector embed(std::string_view text) override;
  std::size_t dimension() const override { return config_.embedding_dim; }
  std::string_view name() const override { return "remote"; }

 private:
  ProviderConfig config_;
};

std::unique_ptr<ChatBackend> make_backend(const ProviderConfig& config);

// Provider-agnostic front door: bounded retry with exponential backoff on
// TransportError, an in-flight cap, a prompt-size guard and an optional
// audit log. Shareable across threads.
class LlmGateway final : public Embedder {
 public:
  explicit LlmGateway(ProviderConfig config);
  LlmGateway(ProviderConfig config, std::shared_ptr<ChatBackend> backend);

  std::string complete(const ChatRequest& request) const;
  EmbeddingVector embed(std::string_view text) const override;
  std::size_t dimension() const override { return backend_->dimension(); }

  const ProviderConfig& config() const { return config_; }
  std::size_t calls() const { return calls_.load(); }
  int peak_inflight() const { return peak_.load(); }

 private:
  void audit(const ChatRequest& request, const std::string* reply, const std::string& error,
             int attempts) const;

  ProviderConfig config_;
  std::shared_ptr<ChatBackend> backend_;
  mutable std::counting_semaphore<1024> slots_;
  mutable std::atomic<int> inflight_{0};
  mutable std::atomic<int> peak_{0};
  mutable std::atomic<std::size_t> calls_{0};
  mutable std::mutex audit_mutex_;
};

// One-shot helpers mirroring the gateway operations.
std::string complete(const ChatRequest& request, const ProviderConfig& config);
EmbeddingVector embed(std::string_view text, const ProviderConfig& config);

}  // namespace changelens
