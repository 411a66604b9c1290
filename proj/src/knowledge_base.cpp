#include "changelens/knowledge_base.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>

#include "changelens/error.hpp"
#include "changelens/kernels.hpp"
#include "changelens/rng.hpp"
#include "changelens/text.hpp"

namespace changelens {

std::string_view to_string(Admission a) {
  switch (a) {
    case Admission::Seed: return "Seed";
    case Admission::CoTScoreGate: return "CoTScoreGate";
    case Admission::HumanGood: return "HumanGood";
  }
  return "Seed";
}

std::optional<Admission> parse_admission(std::string_view s) {
  for (auto a : {Admission::Seed, Admission::CoTScoreGate, Admission::HumanGood})
    if (to_string(a) == s) return a;
  return std::nullopt;
}

void to_json(Json& j, const CaseRecord& v) {
  j = Json{{"case_id", v.case_id},
           {"domain_text", v.domain_text},
           {"report", v.report},
           {"embedding", v.embedding},
           {"admitted_by", to_string(v.admitted_by)},
           {"created_at", v.created_at}};
  j["ground_truth"] = v.ground_truth ? Json(*v.ground_truth) : Json(nullptr);
}

void from_json(const Json& j, CaseRecord& v) {
  try {
    v.case_id = j.at("case_id").get<std::string>();
    v.domain_text = j.at("domain_text").get<std::string>();
    v.report = j.at("report").get<AnalysisReport>();
    v.embedding = j.at("embedding").get<EmbeddingVector>();
    const auto adm = parse_admission(j.at("admitted_by").get<std::string>());
    if (!adm) throw Error(ErrorCode::FormatError, "unknown admitted_by");
    v.admitted_by = *adm;
    v.created_at = j.at("created_at").get<EpochSeconds>();
    v.ground_truth.reset();
    if (j.contains("ground_truth") && !j.at("ground_truth").is_null())
      v.ground_truth = j.at("ground_truth").get<GroundTruth>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("case record: ") + e.what());
  }
}

void RetrievalConfig::validate() const {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "retrieval k must be >= 1");
  if (!(min_similarity >= 0.0 && min_similarity <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "retrieval min_similarity must be in [0,1]");
}

KnowledgeBase::KnowledgeBase(std::shared_ptr<const Embedder> embedder) : embedder_(std::move(embedder)) {
  if (!embedder_) throw Error(ErrorCode::InvalidArgument, "knowledge base needs an embedder");
}

KnowledgeBase::KnowledgeBase(const KnowledgeBase& other) {
  std::shared_lock lock(other.mutex_);
  embedder_ = other.embedder_;
  path_ = other.path_;
  records_ = other.records_;
  by_id_ = other.by_id_;
  matrix_ = other.matrix_;
  revoked_ = other.revoked_;
}

KnowledgeBase KnowledgeBase::open(const std::string& path, std::shared_ptr<const Embedder> embedder) {
  return load(path, std::move(embedder), true);
}

KnowledgeBase KnowledgeBase::load(const std::string& path, std::shared_ptr<const Embedder> embedder,
                                  bool check_dimensions) {
  KnowledgeBase kb(std::move(embedder));
  kb.path_ = path;
  std::ifstream in(path);
  if (!in) return kb;  // created on first write
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    Json rec;
    try {
      rec = Json::parse(lines[i]);
    } catch (const nlohmann::json::exception&) {
      if (i + 1 == lines.size()) break;  // torn tail from an interrupted append
      throw Error(ErrorCode::FormatError, path + ": malformed record on line " + std::to_string(i + 1));
    }
    const auto op = rec.value("op", "");
    if (op == "add") {
      auto record = rec.at("record").get<CaseRecord>();
      if (kb.by_id_.count(record.case_id))
        throw Error(ErrorCode::FormatError, path + ": duplicate active id " + record.case_id);
      kb.records_.push_back(std::move(record));
      kb.by_id_[kb.records_.back().case_id] = kb.records_.size() - 1;
    } else if (op == "revoke") {
      const auto id = rec.at("case_id").get<std::string>();
      auto it = kb.by_id_.find(id);
      if (it == kb.by_id_.end()) continue;
      kb.records_.erase(kb.records_.begin() + static_cast<std::ptrdiff_t>(it->second));
      kb.by_id_.clear();
      for (std::size_t r = 0; r < kb.records_.size(); ++r) kb.by_id_[kb.records_[r].case_id] = r;
      ++kb.revoked_;
    } else {
      throw Error(ErrorCode::FormatError, path + ": unknown op on line " + std::to_string(i + 1));
    }
  }
  for (const auto& r : kb.records_)
    if (check_dimensions && r.embedding.dimension() != kb.embedder_->dimension())
      throw Error(ErrorCode::DimensionMismatch,
                  "record " + r.case_id + " has dimension " + std::to_string(r.embedding.dimension()) +
                      "; run `kb rebuild` after switching embedding backends");
  kb.reindex_locked();
  return kb;
}

void KnowledgeBase::append_line(const Json& line) const {
  if (path_.empty()) return;
  const std::filesystem::path p(path_);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot append to " + path_);
  const auto text = line.dump() + "\n";
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path_);
}

void KnowledgeBase::insert_locked(CaseRecord record) {
  by_id_[record.case_id] = records_.size();
  matrix_.insert(matrix_.end(), record.embedding.values.begin(), record.embedding.values.end());
  records_.push_back(std::move(record));
}

void KnowledgeBase::reindex_locked() {
  by_id_.clear();
  matrix_.clear();
  matrix_.reserve(records_.size() * embedder_->dimension());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    by_id_[records_[i].case_id] = i;
    matrix_.insert(matrix_.end(), records_[i].embedding.values.begin(), records_[i].embedding.values.end());
  }
}

std::string KnowledgeBase::add_case(CaseRecord record) {
  if (is_blank(record.case_id)) throw Error(ErrorCode::InvalidArgument, "case_id must be non-empty");
  if (is_blank(record.domain_text)) throw Error(ErrorCode::InvalidArgument, "domain_text must be non-empty");
  if (record.embedding.values.empty()) record.embedding = embedder_->embed(record.domain_text);
  if (record.embedding.dimension() != embedder_->dimension())
    throw Error(ErrorCode::DimensionMismatch, "record embedding dimension differs from the embedder");
  std::unique_lock lock(mutex_);
  if (by_id_.count(record.case_id)) throw Error(ErrorCode::DuplicateId, "duplicate case_id " + record.case_id);
  append_line(Json{{"op", "add"}, {"record", record}});
  auto id = record.case_id;
  insert_locked(std::move(record));
  return id;
}

bool KnowledgeBase::revoke(const std::string& case_id, const std::string& reason) {
  std::unique_lock lock(mutex_);
  auto it = by_id_.find(case_id);
  if (it == by_id_.end()) return false;
  append_line(Json{{"op", "revoke"}, {"case_id", case_id}, {"reason", reason}});
  records_.erase(records_.begin() + static_cast<std::ptrdiff_t>(it->second));
  ++revoked_;
  reindex_locked();
  return true;
}

std::vector<RetrievedCase> KnowledgeBase::retrieve(const std::string& query_text,
                                                   const RetrievalConfig& cfg) const {
  if (is_blank(query_text)) throw Error(ErrorCode::EmptyQuery, "retrieve: query text is empty");
  cfg.validate();
  EmbeddingVector q;
  try {
    q = embedder_->embed(query_text);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmptyText) throw Error(ErrorCode::EmptyQuery, "retrieve: query has no tokens");
    throw;
  }
  return retrieve_embedding(q, cfg);
}

std::vector<RetrievedCase> KnowledgeBase::retrieve_embedding(const EmbeddingVector& query,
                                                             const RetrievalConfig& cfg) const {
  cfg.validate();
  std::shared_lock lock(mutex_);
  if (records_.empty()) return {};
  if (query.dimension() != embedder_->dimension())
    throw Error(ErrorCode::DimensionMismatch, "query embedding dimension differs from the knowledge base");
  const kernels::MatrixView view{matrix_, records_.size(), embedder_->dimension()};
  const auto sims = kernels::cosine_scores_parallel(query.values, view);

  std::vector<std::size_t> order(records_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    if (records_[a].created_at != records_[b].created_at) return records_[a].created_at < records_[b].created_at;
    return records_[a].case_id < records_[b].case_id;
  });
  std::vector<RetrievedCase> out;
  for (auto i : order) {
    if (out.size() >= cfg.k) break;
    if (sims[i] < cfg.min_similarity) break;
    out.push_back({records_[i], sims[i]});
  }
  return out;
}

std::optional<CaseRecord> KnowledgeBase::get(const std::string& case_id) const {
  std::shared_lock lock(mutex_);
  auto it = by_id_.find(case_id);
  if (it == by_id_.end()) return std::nullopt;
  return records_[it->second];
}

bool KnowledgeBase::contains(const std::string& case_id) const {
  std::shared_lock lock(mutex_);
  return by_id_.count(case_id) > 0;
}

std::vector<CaseRecord> KnowledgeBase::records() const {
  std::shared_lock lock(mutex_);
  return records_;
}

std::size_t KnowledgeBase::size() const {
  std::shared_lock lock(mutex_);
  return records_.size();
}

KbStats KnowledgeBase::stats() const {
  std::shared_lock lock(mutex_);
  KbStats s;
  s.active = records_.size();
  s.revoked = revoked_;
  s.dimension = embedder_->dimension();
  for (const auto& r : records_) ++s.by_admission[r.admitted_by];
  return s;
}

KnowledgeBase KnowledgeBase::sample_fraction(double p, std::uint64_t seed) const {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "sample fraction must be in [0,1]");
  std::shared_lock lock(mutex_);
  const auto n = records_.size();
  const auto count = static_cast<std::size_t>(std::floor(p * static_cast<double>(n) + 0.5));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  DeterministicRng rng(seed);
  rng.shuffle(perm);
  perm.resize(std::min(count, n));
  std::sort(perm.begin(), perm.end());

  KnowledgeBase out(embedder_);
  for (auto i : perm) out.insert_locked(records_[i]);
  return out;
}

void KnowledgeBase::save(const std::string& path) const {
  std::shared_lock lock(mutex_);
  std::string text;
  for (const auto& r : records_) text += Json{{"op", "add"}, {"record", r}}.dump() + "\n";
  write_text_file_atomic(path, text);
}

KnowledgeBase KnowledgeBase::rebuild(const std::string& path, std::shared_ptr<const Embedder> embedder) {
  auto kb = load(path, std::move(embedder), false);
  for (auto& r : kb.records_) r.embedding = kb.embedder_->embed(r.domain_text);
  kb.reindex_locked();
  kb.save(path);
  return kb;
}

void to_json(Json& j, const KbStats& v) {
  Json by = Json::object();
  for (auto a : {Admission::Seed, Admission::CoTScoreGate, Admission::HumanGood}) {
    auto it = v.by_admission.find(a);
    by[std::string(to_string(a))] = it == v.by_admission.end() ? 0 : it->second;
  }
  j = Json{{"active", v.active}, {"revoked", v.revoked}, {"by_admission", by}, {"dimension", v.dimension}};
}

}  // namespace changelens
