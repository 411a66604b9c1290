#pragma once

#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>

#include "changelens/error.hpp"
#include "changelens/evalharness.hpp"
#include "changelens/llm_gateway.hpp"

namespace testing {

using namespace changelens;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("changelens-unit-" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Replies from a queue in call order; the last reply repeats once the queue
// is down to one entry. Records every request.
class QueueBackend final : public ChatBackend {
 public:
  explicit QueueBackend(std::deque<std::string> replies, std::size_t dim = 256)
      : replies_(std::move(replies)), embedder_(dim) {}
  std::string complete(const ChatRequest& request) override {
    std::lock_guard lock(mutex_);
    requests.push_back(request);
    if (replies_.empty()) throw Error(ErrorCode::UnscriptedPrompt, "queue exhausted");
    auto r = replies_.front();
    if (replies_.size() > 1) replies_.pop_front();
    return r;
  }
  EmbeddingVector embed(std::string_view text) override { return embedder_.embed(text); }
  std::size_t dimension() const override { return embedder_.dimension(); }
  std::string_view name() const override { return "queue"; }
  std::vector<ChatRequest> requests;

 private:
  std::mutex mutex_;
  std::deque<std::string> replies_;
  HashingEmbedder embedder_;
};

// Seed-42 corpus shared across test cases; generation takes well under a second.
inline const GeneratedCorpus& small_corpus() {
  static const GeneratedCorpus corpus = [] {
    CorpusSpec spec;
    spec.seed = 42;
    spec.n_cases = 20;
    return generate_corpus(spec);
  }();
  return corpus;
}

inline std::shared_ptr<LlmGateway> scripted_gateway(const GeneratedCorpus& corpus) {
  ProviderConfig pc;
  return std::make_shared<LlmGateway>(pc, std::make_shared<ScriptedModel>(corpus.script, 1024));
}

inline const CaseBundle& first_with(bool erroneous) {
  for (const auto& b : small_corpus().bundles)
    if (b.ground_truth && b.ground_truth->erroneous == erroneous) return b;
  throw std::runtime_error("corpus lacks the requested case");
}

}  // namespace testing
