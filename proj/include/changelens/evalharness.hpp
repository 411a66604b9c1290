#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "changelens/feedback.hpp"
#include "changelens/inference.hpp"
#include "changelens/knowledge_base.hpp"
#include "changelens/llm_gateway.hpp"
#include "changelens/serialization.hpp"
#include "changelens/types.hpp"

namespace changelens {

// ---------------------------------------------------------------------------
// Synthetic corpus

struct CorpusSpec {
  std::uint64_t seed = 42;
  std::size_t n_cases = 20;
  double erroneous_fraction = 0.5;
  std::map<FaultKind, double> fault_mix;  // empty == uniform over all kinds
  std::size_t n_history = 20;             // labeled cases for the knowledge base
  double history_erroneous_fraction = 0.7;
  EpochSeconds base_time = 1'700'000'000;

  // Throws Error(InvalidArgument): n_cases > 0, fractions in [0,1], weights
  // nonnegative with a positive sum.
  void validate() const;
};

void to_json(Json& j, const CorpusSpec& v);
void from_json(const Json& j, CorpusSpec& v);

// What the scripted model knows about one case. Derived from the ground
// truth, so its replies are consistent with it by construction.
struct ScriptEntry {
  std::string ticket_id;
  std::string service;
  GroundTruth truth;
  std::string symptom;      // plain-words description of the injected shape
  std::string log_line;     // the novel log message, empty for normal cases
  std::vector<std::string> decoys;  // wrong root causes, best first
  int base_rank = 1;        // rank of the true cause without retrieval help; 0 == absent
  bool vague_first = false; // first reply carries a one-line CoT

  bool operator==(const ScriptEntry&) const = default;
};

void to_json(Json& j, const ScriptEntry& v);
void from_json(const Json& j, ScriptEntry& v);

struct GeneratedCorpus {
  CorpusSpec spec;
  std::vector<CaseBundle> bundles;
  std::vector<CaseRecord> history;  // embeddings filled
  std::map<std::string, ScriptEntry> script;  // by ticket id, bundles and history
  Transcript transcript;                      // replies for the standard variant runs

  KnowledgeBase history_kb(std::shared_ptr<const Embedder> embedder) const;
};

// File layout: {"spec", "bundles", "history", "script"}. The transcript is
// saved next to it as its own file.
void to_json(Json& j, const GeneratedCorpus& v);
void from_json(const Json& j, GeneratedCorpus& v);
GeneratedCorpus load_corpus(const std::string& path);
void save_corpus(const GeneratedCorpus& corpus, const std::string& path);

// Deterministic in the spec. Erroneous cases get an injected metric shape
// plus a novel log template naming the fault; normal cases get stationary
// noise. The transcript covers every standard variant against the full
// history knowledge base.
GeneratedCorpus generate_corpus(const CorpusSpec& spec, std::size_t embedding_dim = 1024);

// Chat backend that answers from the script. It reads the ticket id from the
// current-change block and moves the true root cause to rank 1 when a
// retrieved case names it.
class ScriptedModel final : public ChatBackend {
 public:
  ScriptedModel(std::map<std::string, ScriptEntry> script, std::size_t dim);

  std::string complete(const ChatRequest& request) override;
  EmbeddingVector embed(std::string_view text) override { return embedder_.embed(text); }
  std::size_t dimension() const override { return embedder_.dimension(); }
  std::string_view name() const override { return "scripted"; }

  // The reply an expert would write for this entry: full reasoning, true
  // cause ranked first.
  static std::string expert_reply(const ScriptEntry& entry);

 private:
  std::map<std::string, ScriptEntry> script_;
  HashingEmbedder embedder_;
};

// Forwards to an inner backend and records every (prompt, reply) pair.
class RecordingBackend final : public ChatBackend {
 public:
  explicit RecordingBackend(std::shared_ptr<ChatBackend> inner);

  std::string complete(const ChatRequest& request) override;
  EmbeddingVector embed(std::string_view text) override { return inner_->embed(text); }
  std::size_t dimension() const override { return inner_->dimension(); }
  std::string_view name() const override { return inner_->name(); }

  Transcript transcript() const;

 private:
  std::shared_ptr<ChatBackend> inner_;
  mutable std::mutex mutex_;
  Transcript recorded_;
};

// ---------------------------------------------------------------------------
// Metrics

struct TaskScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  bool operator==(const TaskScores&) const = default;
};

struct MetricsTable {
  TaskScores ecd;
  TaskScores ft;
  TaskScores rcca;
  double top1 = 0.0;
  double top3 = 0.0;
  double top5 = 0.0;
  double avg_at_5 = 0.0;
  double runtime_mean_s = 0.0;
  double runtime_median_s = 0.0;
  std::size_t n_cases = 0;
  std::size_t n_erroneous = 0;

  bool operator==(const MetricsTable&) const = default;
};

void to_json(Json& j, const MetricsTable& v);
void from_json(const Json& j, MetricsTable& v);
// Metrics JSON without the wall-clock runtime fields.
std::string canonical_metrics_json(const MetricsTable& v);

enum class AvgMode { ReciprocalRank, HitRate };

struct MetricsOptions {
  bool lenient_match = false;  // substring either way instead of exact
  AvgMode avg_mode = AvgMode::ReciprocalRank;
};

struct LabeledTruth {
  std::string ticket_id;
  GroundTruth truth;
};

double harmonic_f1(double precision, double recall);
bool root_cause_matches(std::string_view candidate, std::string_view truth, bool lenient);

// ECD is binary with erroneous as the positive class. FT is macro-averaged
// over erroneous cases and the union of true and predicted classes; its f1 is
// the harmonic mean of macro precision and macro recall. RCCA precision is
// top-1 hits over reports with a ranking, recall is top-1 hits over
// erroneous cases. Throws Error(Misaligned) on duplicate or unmatched ids.
MetricsTable compute_metrics(const std::vector<AnalysisReport>& reports, const std::vector<LabeledTruth>& truths,
                             const MetricsOptions& options = {});

std::vector<LabeledTruth> truths_of(const std::vector<CaseBundle>& bundles);

// Fixed-width text rendering for terminals and logs.
std::string render_metrics_table(const std::vector<std::pair<std::string, MetricsTable>>& rows);

// ---------------------------------------------------------------------------
// Benchmark runs

inline constexpr std::string_view kStandardVariants[] = {"full", "none",  "rag_only", "rag_scot",
                                                         "A1",   "A2",    "no_cot",   "no_rag"};

bool is_known_variant(std::string_view variant);
// Variant -> ablation flags and refine switch on top of `base`. Throws
// Error(InvalidArgument) for unknown names.
InferenceConfig variant_config(const InferenceConfig& base, std::string_view variant);

struct CaseFailure {
  std::string ticket_id;
  std::string code;
  std::string message;

  bool operator==(const CaseFailure&) const = default;
};

struct VariantResult {
  std::string variant;
  std::vector<AnalysisReport> reports;  // corpus order; failed cases hold a placeholder
  std::vector<AuditRecord> audits;      // successful cases only
  std::vector<CaseFailure> failures;
  MetricsTable metrics;
};

void to_json(Json& j, const VariantResult& v);

struct BenchConfig {
  InferenceConfig inference;
  MetricsOptions metrics;
  int max_parallel = 4;
};

// Cases run concurrently up to max_parallel; results are keyed back into
// corpus order before metrics. Per-case failures are recorded, not thrown.
VariantResult run_variant(const std::vector<CaseBundle>& bundles, const KnowledgeBase* kb,
                          const LlmGateway& gateway, const BenchConfig& cfg, std::string_view variant);

std::vector<VariantResult> run_benchmark(const std::vector<CaseBundle>& bundles, const KnowledgeBase* kb,
                                         const LlmGateway& gateway, const BenchConfig& cfg,
                                         const std::vector<std::string>& variants);

// Report JSON without timing fields, one line per case; equal strings mean
// equal reports.
std::string canonical_reports(const std::vector<AnalysisReport>& reports);

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepKind { ColdStart, FeedbackRatio };

std::string_view to_string(SweepKind k);
std::optional<SweepKind> parse_sweep_kind(std::string_view s);

struct SweepPoint {
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::size_t kb_size = 0;
  std::size_t retrieved_total = 0;   // retrieved cases summed over audits
  std::size_t retrieved_chars = 0;   // characters of the retrieved block summed over prompts
  std::size_t corrections = 0;       // FeedbackRatio: corrected cases admitted
  std::size_t prompts_changed = 0;   // FeedbackRatio: prompts differing from the baseline run
  MetricsTable metrics;
  std::vector<AuditRecord> audits;
};

void to_json(Json& j, const SweepPoint& v);

struct SweepConfig {
  SweepKind kind = SweepKind::ColdStart;
  std::vector<double> fractions;
  std::vector<std::uint64_t> seeds = {0};
  std::string variant = "full";
  EpochSeconds now = 0;  // timestamp for admitted corrections
};

// ColdStart: the history base is cut to sample_fraction(p, seed) before each
// run. FeedbackRatio: a fraction of the failed cases of a baseline run are
// labeled Bad, their corrections admitted, and the corpus re-run.
std::vector<SweepPoint> sweep(const SweepConfig& sweep_cfg, const std::vector<CaseBundle>& bundles,
                              const KnowledgeBase& history, const LlmGateway& gateway, const BenchConfig& cfg);

// "fraction,seed,kb_size,retrieved_total,ecd_f1,ft_f1,rcca_top1,avg_at_5" CSV
// for plotting.
std::string sweep_plot_data(const std::vector<SweepPoint>& points);

// Cases that a report gets wrong: ECD mismatch, or an erroneous case whose
// top candidate misses the true root cause.
bool case_failed(const AnalysisReport& report, const GroundTruth& truth, const MetricsOptions& options = {});

}  // namespace changelens
