#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "changelens/config.hpp"
#include "changelens/error.hpp"
#include "changelens/feedback.hpp"
#include "changelens/inference.hpp"
#include "changelens/knowledge_base.hpp"
#include "changelens/llm_gateway.hpp"

namespace httplib {
class Server;
}

namespace changelens {

inline constexpr std::string_view kServiceVersion = "0.1.0";
inline constexpr const char* kVersionHeader = "X-ChangeLens-Version";
inline constexpr const char* kIdempotencyHeader = "Idempotency-Key";

enum class CaseStatus { Queued, Analyzing, Done, Failed };

std::string_view to_string(CaseStatus s);

struct CaseState {
  std::string case_id;
  CaseStatus status = CaseStatus::Queued;
  std::string report_id;
  EpochSeconds submitted_at = 0;
  std::optional<Json> error;  // {code, message, detail}
};

// Transport-independent response; the HTTP layer copies it verbatim.
struct ApiResponse {
  int status = 200;
  Json body;
  std::map<std::string, std::string> headers;
};

Json error_body(std::string_view code, const std::string& message, const std::string& detail = {});
int http_status_for(ErrorCode code);

// Case submission, asynchronous analysis on a fixed worker pool, report and
// audit retrieval, and human feedback. Analysis uses run_case, the same code
// path as the CLI; gate admission and label updates go through
// apply_case_update.
class AnalysisService {
 public:
  explicit AnalysisService(ServiceConfig cfg, std::shared_ptr<ChatBackend> backend = nullptr);
  ~AnalysisService();
  AnalysisService(const AnalysisService&) = delete;
  AnalysisService& operator=(const AnalysisService&) = delete;

  ApiResponse submit_case(const std::string& body, const std::string& idempotency_key);
  ApiResponse get_report(const std::string& case_id) const;
  // Filter matches a status (queued, analyzing, done, failed) or a review
  // state (pending_review, gated, admitted, rejected). Empty lists all.
  ApiResponse list_cases(const std::string& filter) const;
  ApiResponse post_feedback(const std::string& report_id, const std::string& body, const std::string& idempotency_key);
  ApiResponse kb_stats() const;
  ApiResponse get_audit(const std::string& report_id) const;

  // True once the queue is empty and no worker is busy.
  bool wait_idle(std::chrono::milliseconds timeout) const;

  // Binds the HTTP server; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  void listen();            // blocks until stop()
  void start_background();  // listen() on an owned thread
  void stop();

  const ServiceConfig& config() const { return cfg_; }
  const KnowledgeBase& kb() const { return *kb_; }

 private:
  void worker_loop();
  void analyze(const std::string& case_id);
  Json case_row(const CaseState& s) const;
  bool authorized(const std::string& header) const;
  void install_routes();

  ServiceConfig cfg_;
  std::shared_ptr<LlmGateway> gateway_;
  std::unique_ptr<KnowledgeBase> kb_;
  AuditStore audits_;
  FeedbackStore feedback_;

  mutable std::mutex mutex_;
  mutable std::condition_variable work_cv_;
  mutable std::condition_variable idle_cv_;
  std::map<std::string, CaseState> cases_;
  std::map<std::string, CaseBundle> bundles_;
  std::map<std::string, std::string> case_keys_;      // idempotency key -> case id
  std::map<std::string, ApiResponse> feedback_keys_;  // idempotency key -> first response
  std::mutex feedback_mutex_;
  std::deque<std::string> queue_;
  int busy_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;

  std::unique_ptr<httplib::Server> http_;
  std::thread http_thread_;
};

}  // namespace changelens
