#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "changelens/llm_gateway.hpp"
#include "changelens/serialization.hpp"
#include "changelens/types.hpp"

namespace changelens {

enum class Admission { Seed, CoTScoreGate, HumanGood };

std::string_view to_string(Admission a);
std::optional<Admission> parse_admission(std::string_view s);

struct CaseRecord {
  std::string case_id;
  std::string domain_text;
  AnalysisReport report;
  std::optional<GroundTruth> ground_truth;
  EmbeddingVector embedding;  // filled by add_case when empty
  Admission admitted_by = Admission::Seed;
  EpochSeconds created_at = 0;

  bool operator==(const CaseRecord&) const = default;
};

void to_json(Json& j, const CaseRecord& v);
void from_json(const Json& j, CaseRecord& v);

struct RetrievalConfig {
  std::size_t k = 3;
  double min_similarity = 0.0;

  void validate() const;
};

struct RetrievedCase {
  CaseRecord record;
  double similarity = 0.0;
};

struct KbStats {
  std::size_t active = 0;
  std::size_t revoked = 0;
  std::map<Admission, std::size_t> by_admission;
  std::size_t dimension = 0;
};

void to_json(Json& j, const KbStats& v);

// Case store with exact cosine retrieval. When opened on a path, every
// mutation is appended to a JSONL log ({"op":"add"|"revoke", ...}) before it
// becomes visible; the in-memory index is rebuilt from the log on open.
// Readers share a lock; writers are serialized.
class KnowledgeBase {
 public:
  explicit KnowledgeBase(std::shared_ptr<const Embedder> embedder);
  KnowledgeBase(const KnowledgeBase& other);
  KnowledgeBase& operator=(const KnowledgeBase&) = delete;

  // Loads an existing log (a torn final line is ignored) and appends to it.
  static KnowledgeBase open(const std::string& path, std::shared_ptr<const Embedder> embedder);

  // Throws Error(DuplicateId) if an active record already has this id.
  std::string add_case(CaseRecord record);
  // Tombstones a record; returns false if the id is not active.
  bool revoke(const std::string& case_id, const std::string& reason);

  // Throws Error(EmptyQuery) on blank text.
  std::vector<RetrievedCase> retrieve(const std::string& query_text, const RetrievalConfig& cfg) const;
  std::vector<RetrievedCase> retrieve_embedding(const EmbeddingVector& query, const RetrievalConfig& cfg) const;

  std::optional<CaseRecord> get(const std::string& case_id) const;
  bool contains(const std::string& case_id) const;
  std::vector<CaseRecord> records() const;  // active, in insertion order
  std::size_t size() const;
  bool empty() const { return size() == 0; }
  KbStats stats() const;

  // Round-half-up count of records, chosen by a seeded permutation. The
  // result is in-memory. Throws Error(InvalidArgument) unless 0 <= p <= 1.
  KnowledgeBase sample_fraction(double p, std::uint64_t seed) const;

  // Writes a compacted log (active records only) to `path`.
  void save(const std::string& path) const;
  // Loads a log written under any embedder, re-embeds every record with
  // `embedder` and compacts the log in place.
  static KnowledgeBase rebuild(const std::string& path, std::shared_ptr<const Embedder> embedder);

  const Embedder& embedder() const { return *embedder_; }
  const std::string& path() const { return path_; }

 private:
  static KnowledgeBase load(const std::string& path, std::shared_ptr<const Embedder> embedder,
                            bool check_dimensions);
  void append_line(const Json& line) const;
  void insert_locked(CaseRecord record);
  void reindex_locked();

  std::shared_ptr<const Embedder> embedder_;
  std::string path_;
  std::vector<CaseRecord> records_;
  std::map<std::string, std::size_t> by_id_;
  std::vector<double> matrix_;  // row-major embeddings of records_
  std::size_t revoked_ = 0;
  mutable std::shared_mutex mutex_;
};

}  // namespace changelens
