#include "changelens/service.hpp"

#include <ctime>
#include <filesystem>
#include <set>

#include <httplib.h>

#include "changelens/error.hpp"
#include "changelens/serialization.hpp"
#include "changelens/text.hpp"
#include "changelens/validation.hpp"

namespace changelens {

namespace fs = std::filesystem;

std::string_view to_string(CaseStatus s) {
  switch (s) {
    case CaseStatus::Queued: return "queued";
    case CaseStatus::Analyzing: return "analyzing";
    case CaseStatus::Done: return "done";
    case CaseStatus::Failed: return "failed";
  }
  return "";
}

Json error_body(std::string_view code, const std::string& message, const std::string& detail) {
  return Json{{"code", code}, {"message", message}, {"detail", detail}};
}

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::FormatError:
    case ErrorCode::InvalidBundle:
    case ErrorCode::EmptyMessage:
    case ErrorCode::InvalidSpan:
    case ErrorCode::UsageError: return 400;
    case ErrorCode::UnknownReport: return 404;
    case ErrorCode::DuplicateId: return 409;
    case ErrorCode::NothingToExport: return 422;
    case ErrorCode::TransportError: return 502;
    default: return 500;
  }
}

namespace {

ApiResponse error_response(const Error& e) {
  return {http_status_for(e.code()), error_body(error_code_name(e.code()), e.what(), e.detail()), {}};
}

ApiResponse error_response(int status, std::string_view code, const std::string& message,
                           const std::string& detail = {}) {
  return {status, error_body(code, message, detail), {}};
}

EpochSeconds now_seconds() { return static_cast<EpochSeconds>(std::time(nullptr)); }

std::string status_url(const std::string& case_id) { return "/cases/" + case_id + "/report"; }

Json parse_body(const std::string& body) {
  try {
    return Json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("request body is not valid JSON: ") + e.what());
  }
}

ServiceConfig with_resolved_paths(ServiceConfig cfg) {
  cfg.resolve_paths();
  return cfg;
}

}  // namespace

// Paths resolve before the stores are built from them.
AnalysisService::AnalysisService(ServiceConfig cfg, std::shared_ptr<ChatBackend> backend)
    : cfg_(with_resolved_paths(std::move(cfg))), audits_(cfg_.audit_dir), feedback_(cfg_.feedback_path) {
  if (backend) {
    gateway_ = std::make_shared<LlmGateway>(cfg_.provider, std::move(backend));
  } else {
    cfg_.provider.validate();
    gateway_ = std::make_shared<LlmGateway>(cfg_.provider);
  }
  kb_ = std::make_unique<KnowledgeBase>(KnowledgeBase::open(cfg_.kb_path, gateway_));
  // Reports persisted by an earlier run come back as finished cases.
  for (const auto& a : audits_.all()) {
    if (!a.variant.empty() || a.report_id != a.ticket_id) continue;
    cases_[a.ticket_id] = CaseState{a.ticket_id, CaseStatus::Done, a.report_id, 0, std::nullopt};
    const auto stored = fs::path(cfg_.cases_dir) / (a.ticket_id + ".json");
    if (fs::exists(stored)) bundles_[a.ticket_id] = load_bundle(stored.string());
  }
  for (int i = 0; i < std::max(1, cfg_.workers); ++i) workers_.emplace_back([this] { worker_loop(); });
}

AnalysisService::~AnalysisService() {
  stop();
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  work_cv_.notify_all();
  for (auto& t : workers_)
    if (t.joinable()) t.join();
}

void AnalysisService::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lock(mutex_);
      work_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      id = queue_.front();
      queue_.pop_front();
      ++busy_;
      cases_[id].status = CaseStatus::Analyzing;
    }
    analyze(id);
    {
      std::lock_guard lock(mutex_);
      --busy_;
    }
    idle_cv_.notify_all();
  }
}

void AnalysisService::analyze(const std::string& case_id) {
  CaseBundle bundle;
  {
    std::lock_guard lock(mutex_);
    bundle = bundles_.at(case_id);
  }
  try {
    auto run = run_case(bundle, kb_.get(), *gateway_, cfg_.inference);
    audits_.put(run.audit);
    write_json_file((fs::path(cfg_.reports_dir) / (case_id + ".json")).string(), Json(run.report));
    apply_case_update(run.audit, feedback_.active(run.audit.report_id), *kb_, now_seconds());
    std::lock_guard lock(mutex_);
    auto& s = cases_[case_id];
    s.status = CaseStatus::Done;
    s.report_id = run.audit.report_id;
  } catch (const Error& e) {
    std::lock_guard lock(mutex_);
    auto& s = cases_[case_id];
    s.status = CaseStatus::Failed;
    s.error = error_body(error_code_name(e.code()), e.what(), e.detail());
  } catch (const std::exception& e) {
    std::lock_guard lock(mutex_);
    auto& s = cases_[case_id];
    s.status = CaseStatus::Failed;
    s.error = error_body("Internal", e.what());
  }
}

bool AnalysisService::wait_idle(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  return idle_cv_.wait_for(lock, timeout, [&] { return queue_.empty() && busy_ == 0; });
}

ApiResponse AnalysisService::submit_case(const std::string& body, const std::string& idempotency_key) {
  try {
    CaseBundle bundle;
    try {
      bundle = parse_body(body).get<CaseBundle>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::FormatError, std::string("case bundle: ") + e.what());
    }
    const auto report = validate_bundle(bundle);
    if (!report.ok()) throw Error(ErrorCode::InvalidBundle, "case bundle failed validation", report.to_string());
    const auto id = bundle.ticket.ticket_id;

    std::lock_guard lock(mutex_);
    if (!idempotency_key.empty()) {
      if (auto it = case_keys_.find(idempotency_key); it != case_keys_.end()) {
        const auto& s = cases_.at(it->second);
        return {200,
                {{"case_id", s.case_id}, {"report_id", s.report_id.empty() ? s.case_id : s.report_id},
                 {"status", to_string(s.status)}, {"status_url", status_url(s.case_id)}, {"replayed", true}},
                {{"Location", status_url(s.case_id)}}};
      }
    }
    if (auto it = cases_.find(id); it != cases_.end()) {
      auto b = bundles_.find(id);
      if (b != bundles_.end() && b->second == bundle) {
        if (!idempotency_key.empty()) case_keys_[idempotency_key] = id;
        return {200,
                {{"case_id", id}, {"report_id", it->second.report_id.empty() ? id : it->second.report_id},
                 {"status", to_string(it->second.status)}, {"status_url", status_url(id)}, {"replayed", true}},
                {{"Location", status_url(id)}}};
      }
      throw Error(ErrorCode::DuplicateId, "a different case with ticket id " + id + " was already submitted", id);
    }
    save_bundle((fs::path(cfg_.cases_dir) / (id + ".json")).string(), bundle);
    bundles_[id] = std::move(bundle);
    cases_[id] = CaseState{id, CaseStatus::Queued, "", now_seconds(), std::nullopt};
    if (!idempotency_key.empty()) case_keys_[idempotency_key] = id;
    queue_.push_back(id);
    work_cv_.notify_one();
    return {202,
            {{"case_id", id}, {"report_id", make_report_id(id, "")}, {"status", "queued"},
             {"status_url", status_url(id)}, {"replayed", false}},
            {{"Location", status_url(id)}}};
  } catch (const Error& e) {
    return error_response(e);
  }
}

ApiResponse AnalysisService::get_report(const std::string& case_id) const {
  CaseState s;
  {
    std::lock_guard lock(mutex_);
    auto it = cases_.find(case_id);
    if (it == cases_.end()) return error_response(404, "UnknownCase", "no case with id " + case_id, case_id);
    s = it->second;
  }
  switch (s.status) {
    case CaseStatus::Queued:
    case CaseStatus::Analyzing:
      return {202, {{"case_id", s.case_id}, {"status", to_string(s.status)}, {"status_url", status_url(s.case_id)}}, {}};
    case CaseStatus::Failed: return {422, *s.error, {}};
    case CaseStatus::Done: break;
  }
  const auto audit = audits_.get(s.report_id);
  if (!audit) return error_response(404, "UnknownReport", "report " + s.report_id + " is missing", s.report_id);
  Json body = audit->report;
  body["report_id"] = audit->report_id;
  body["cot_score"] = audit->cot_score;
  body["passed"] = audit->passed;
  body["flagged_for_review"] = audit->flagged_for_review;
  return {200, body, {}};
}

Json AnalysisService::case_row(const CaseState& s) const {
  Json row{{"case_id", s.case_id}, {"status", to_string(s.status)}, {"report_id", s.report_id}};
  row["label"] = nullptr;
  row["admitted_by"] = nullptr;
  row["passed"] = nullptr;
  row["flagged_for_review"] = nullptr;
  row["ecd_verdict"] = nullptr;
  std::string review = std::string(to_string(s.status));
  if (s.status == CaseStatus::Done) {
    const auto fb = feedback_.active(s.report_id);
    const auto rec = kb_->get(s.report_id);
    if (fb) row["label"] = to_string(fb->label);
    if (rec) row["admitted_by"] = to_string(rec->admitted_by);
    if (auto a = audits_.get(s.report_id)) {
      row["passed"] = a->passed;
      row["flagged_for_review"] = a->flagged_for_review;
      row["ecd_verdict"] = a->report.ecd_verdict;
    }
    if (rec) {
      review = "admitted";
    } else if (fb && fb->label == Label::Bad) {
      review = "rejected";
    } else if (!fb) {
      review = "gated";
    }
    row["pending_review"] = !fb.has_value();
  }
  if (s.error) row["error"] = *s.error;
  row["review_state"] = review;
  return row;
}

ApiResponse AnalysisService::list_cases(const std::string& filter) const {
  std::vector<CaseState> states;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [_, s] : cases_) states.push_back(s);
  }
  const auto f = to_lower(trim(filter));
  static const std::set<std::string> known = {"queued",         "analyzing", "done",     "failed",
                                              "pending_review", "gated",     "admitted", "rejected"};
  if (!f.empty() && !known.count(f))
    return error_response(400, "InvalidArgument", "unknown status filter " + f, f);
  Json rows = Json::array();
  for (const auto& s : states) {
    auto row = case_row(s);
    const bool match = f.empty() || row["status"] == f || row["review_state"] == f ||
                       (f == "pending_review" && row.value("pending_review", false));
    if (match) rows.push_back(std::move(row));
  }
  return {200, {{"cases", rows}, {"count", rows.size()}}, {}};
}

ApiResponse AnalysisService::post_feedback(const std::string& report_id, const std::string& body,
                                           const std::string& idempotency_key) {
  std::lock_guard serial(feedback_mutex_);
  if (!idempotency_key.empty())
    if (auto it = feedback_keys_.find(idempotency_key); it != feedback_keys_.end()) return it->second;
  try {
    const auto j = parse_body(body);
    FeedbackRecord rec;
    rec.report_id = report_id;
    if (!j.contains("label") || !j.at("label").is_string())
      throw Error(ErrorCode::InvalidArgument, "feedback requires a label of Good or Bad");
    const auto label = parse_label(j.at("label").get<std::string>());
    if (!label) throw Error(ErrorCode::InvalidArgument, "label must be Good or Bad", j.at("label").dump());
    rec.label = *label;
    if (j.contains("notes") && !j.at("notes").is_null()) rec.notes = j.at("notes").get<std::string>();
    if (j.contains("corrected_truth") && !j.at("corrected_truth").is_null())
      rec.corrected_truth = j.at("corrected_truth").get<GroundTruth>();
    rec.judge = j.value("judge", "reviewer");
    rec.created_at = now_seconds();

    const auto id = feedback_.record(rec, audits_);
    const auto audit = audits_.get(report_id);
    const auto update = apply_case_update(*audit, feedback_.active(report_id), *kb_, rec.created_at);
    Json out{{"feedback_id", id},
             {"report_id", report_id},
             {"label", to_string(rec.label)},
             {"admitted", kb_->contains(report_id)},
             {"reason", update.decision.reason},
             {"revoked", update.revoked}};
    out["admitted_by"] = nullptr;
    if (auto r = kb_->get(report_id)) out["admitted_by"] = to_string(r->admitted_by);
    if (rec.label == Label::Bad && rec.corrected_truth)
      out["corrected_report_id"] =
          admit_correction(*audit, *rec.corrected_truth, rec.judge, rec.created_at, audits_, feedback_, *kb_);
    ApiResponse resp{201, out, {}};
    if (!idempotency_key.empty()) feedback_keys_[idempotency_key] = resp;
    return resp;
  } catch (const Error& e) {
    return error_response(e);
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, "FormatError", std::string("feedback body: ") + e.what());
  }
}

ApiResponse AnalysisService::kb_stats() const { return {200, Json(kb_->stats()), {}}; }

ApiResponse AnalysisService::get_audit(const std::string& report_id) const {
  const auto a = audits_.get(report_id);
  if (!a) return error_response(404, "UnknownReport", "no audited report with id " + report_id, report_id);
  return {200, Json(*a), {}};
}

bool AnalysisService::authorized(const std::string& header) const {
  if (!cfg_.auth_token) return true;
  return header == "Bearer " + *cfg_.auth_token;
}

namespace {

void send(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  for (const auto& [k, v] : r.headers) res.set_header(k, v);
  res.set_content(r.body.dump(), "application/json");
}

}  // namespace

void AnalysisService::install_routes() {
  auto& s = *http_;
  auto guard = [this](const httplib::Request& req, httplib::Response& res) {
    if (authorized(req.get_header_value("Authorization"))) return true;
    send(res, error_response(401, "Unauthorized", "missing or wrong bearer token"));
    return false;
  };
  s.Post("/cases", [this, guard](const httplib::Request& req, httplib::Response& res) {
    if (!guard(req, res)) return;
    send(res, submit_case(req.body, req.get_header_value(kIdempotencyHeader)));
  });
  s.Get("/cases", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, list_cases(req.has_param("status") ? req.get_param_value("status") : ""));
  });
  s.Get(R"(/cases/([^/]+)/report)", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, get_report(req.matches[1]));
  });
  s.Post(R"(/reports/([^/]+)/feedback)", [this, guard](const httplib::Request& req, httplib::Response& res) {
    if (!guard(req, res)) return;
    send(res, post_feedback(req.matches[1], req.body, req.get_header_value(kIdempotencyHeader)));
  });
  s.Get(R"(/reports/([^/]+)/audit)", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, get_audit(req.matches[1]));
  });
  s.Get("/kb/stats", [this](const httplib::Request&, httplib::Response& res) { send(res, kb_stats()); });
  s.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    send(res, {200, {{"status", "ok"}, {"version", kServiceVersion}}, {}});
  });
  s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const auto code = res.status == 404 ? "NotFound" : "HttpError";
    res.set_content(error_body(code, "no route for " + req.method + " " + req.path).dump(), "application/json");
  });
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string msg = "unexpected failure";
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(error_body("Internal", msg).dump(), "application/json");
  });
  s.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
    res.set_header(kVersionHeader, std::string(kServiceVersion));
  });
}

int AnalysisService::bind(const std::string& host, int port) {
  http_ = std::make_unique<httplib::Server>();
  install_routes();
  if (port == 0) {
    const int bound = http_->bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host);
    return bound;
  }
  if (!http_->bind_to_port(host, port))
    throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void AnalysisService::listen() {
  if (!http_) {
    const auto [host, port] = cfg_.host_port();
    bind(host, port);
  }
  http_->listen_after_bind();
}

void AnalysisService::start_background() {
  if (!http_) {
    const auto [host, port] = cfg_.host_port();
    bind(host, port);
  }
  http_thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
}

void AnalysisService::stop() {
  if (http_) http_->stop();
  if (http_thread_.joinable()) http_thread_.join();
}

}  // namespace changelens
