#include "changelens/evalharness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <numeric>
#include <set>

#include "changelens/error.hpp"
#include "changelens/rng.hpp"
#include "changelens/text.hpp"

namespace changelens {

// ---------------------------------------------------------------------------
// Corpus spec

void CorpusSpec::validate() const {
  if (n_cases == 0) throw Error(ErrorCode::InvalidArgument, "n_cases must be positive");
  if (!(erroneous_fraction >= 0.0 && erroneous_fraction <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "erroneous_fraction must be in [0,1]");
  if (!(history_erroneous_fraction >= 0.0 && history_erroneous_fraction <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "history_erroneous_fraction must be in [0,1]");
  double sum = 0.0;
  for (const auto& [kind, w] : fault_mix) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw Error(ErrorCode::InvalidArgument, "fault_mix weight for " + std::string(to_string(kind)) + " is negative");
    sum += w;
  }
  if (!fault_mix.empty() && !(sum > 0.0)) throw Error(ErrorCode::InvalidArgument, "fault_mix weights sum to zero");
}

void to_json(Json& j, const CorpusSpec& v) {
  Json mix = Json::object();
  for (const auto& [k, w] : v.fault_mix) mix[std::string(to_string(k))] = w;
  j = Json{{"seed", v.seed},
           {"n_cases", v.n_cases},
           {"erroneous_fraction", v.erroneous_fraction},
           {"fault_mix", mix},
           {"n_history", v.n_history},
           {"history_erroneous_fraction", v.history_erroneous_fraction},
           {"base_time", v.base_time}};
}

void from_json(const Json& j, CorpusSpec& v) {
  try {
    v = {};
    v.seed = j.value("seed", v.seed);
    v.n_cases = j.value("n_cases", v.n_cases);
    v.erroneous_fraction = j.value("erroneous_fraction", v.erroneous_fraction);
    v.n_history = j.value("n_history", v.n_history);
    v.history_erroneous_fraction = j.value("history_erroneous_fraction", v.history_erroneous_fraction);
    v.base_time = j.value("base_time", v.base_time);
    if (j.contains("fault_mix")) {
      for (const auto& [k, w] : j.at("fault_mix").items()) {
        const auto kind = parse_fault_kind(k);
        if (!kind) throw Error(ErrorCode::FormatError, "unknown fault kind in fault_mix: " + k);
        v.fault_mix[*kind] = w.get<double>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("corpus spec: ") + e.what());
  }
}

void to_json(Json& j, const ScriptEntry& v) {
  j = Json{{"ticket_id", v.ticket_id}, {"service", v.service},     {"truth", v.truth},
           {"symptom", v.symptom},     {"log_line", v.log_line},   {"decoys", v.decoys},
           {"base_rank", v.base_rank}, {"vague_first", v.vague_first}};
}

void from_json(const Json& j, ScriptEntry& v) {
  try {
    v = {};
    v.ticket_id = j.at("ticket_id").get<std::string>();
    v.service = j.value("service", "");
    v.truth = j.at("truth").get<GroundTruth>();
    v.symptom = j.value("symptom", "");
    v.log_line = j.value("log_line", "");
    v.decoys = j.value("decoys", std::vector<std::string>{});
    v.base_rank = j.value("base_rank", 1);
    v.vague_first = j.value("vague_first", false);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("script entry: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Scenario catalogue

namespace {

enum class Shape { ShiftUp, Ramp, Spike, Burst };

struct Scenario {
  FaultKind kind;
  const char* other_detail;
  const char* root_cause;
  const char* resolution;
  const char* metric;
  Shape shape;
  const char* symptom;
  const char* log_line;
};

// Log lines carry no digits so each one mines to a single template.
const Scenario kScenarios[] = {
    {FaultKind::ResourceExhaustion, "", "memory leak in session cache", "Roll back and cap the session cache size",
     "memory_usage", Shape::Ramp, "memory usage climbs steadily",
     "ERROR OutOfMemoryError while allocating session cache entry"},
    {FaultKind::ResourceExhaustion, "", "worker thread pool exhausted", "Roll back and raise the worker pool limit",
     "cpu_utilization", Shape::ShiftUp, "CPU utilization jumps and stays high",
     "WARN worker pool saturated, rejecting queued task"},
    {FaultKind::ConfigError, "", "connection timeout set too low", "Restore the previous connection timeout setting",
     "error_rate", Shape::ShiftUp, "the error rate steps up and stays high",
     "ERROR upstream request aborted by timeout policy"},
    {FaultKind::ConfigError, "", "cache disabled by feature flag", "Re-enable the cache feature flag",
     "response_time", Shape::ShiftUp, "response time steps up and stays high",
     "WARN cache bypassed because feature flag is off"},
    {FaultKind::CodeDefect, "", "null reference in order handler",
     "Roll back the release and patch the order handler", "error_rate", Shape::ShiftUp,
     "the error rate steps up and stays high", "ERROR NullReferenceException thrown in order handler"},
    {FaultKind::CodeDefect, "", "unbounded retry loop in client library", "Roll back and bound the client retry loop",
     "cpu_utilization", Shape::Ramp, "CPU utilization rises steadily",
     "WARN retry budget exceeded for outbound client call"},
    {FaultKind::DependencyFailure, "", "payment provider unavailable",
     "Fail over to the secondary payment provider", "error_rate", Shape::ShiftUp,
     "the error rate steps up and stays high", "ERROR payment provider returned service unavailable"},
    {FaultKind::DependencyFailure, "", "database replica lagging", "Redirect reads to the primary database",
     "response_time", Shape::Burst, "response time swings widely", "WARN replica lag exceeds read threshold"},
    {FaultKind::NetworkIssue, "", "packet loss in service mesh", "Drain the faulty mesh node", "response_time",
     Shape::Burst, "response time swings widely", "WARN connection reset by peer during request"},
    {FaultKind::NetworkIssue, "", "dns resolution failure", "Restore the previous resolver configuration",
     "error_rate", Shape::Spike, "the error rate briefly spikes", "ERROR name resolution failed for upstream host"},
    {FaultKind::DataIssue, "", "schema mismatch in event payload", "Roll back the producer schema change",
     "error_rate", Shape::ShiftUp, "the error rate steps up and stays high",
     "ERROR failed to deserialize event payload"},
    {FaultKind::DataIssue, "", "corrupted cache entries", "Flush and rebuild the cache", "response_time",
     Shape::Spike, "response time briefly spikes", "WARN checksum mismatch on cached record"},
    {FaultKind::Other, "certificate expiry", "expired TLS certificate", "Renew and redeploy the certificate",
     "error_rate", Shape::ShiftUp, "the error rate steps up and stays high",
     "ERROR TLS handshake failed because certificate expired"},
};

struct MetricShape {
  const char* name;
  const char* unit;
  double base;
  double noise;  // half-width of the uniform noise band
};

const MetricShape kMetrics[] = {
    {"cpu_utilization", "percent", 40.0, 1.0},
    {"error_rate", "percent", 0.5, 0.02},
    {"memory_usage", "MB", 2048.0, 8.0},
    {"response_time", "ms", 120.0, 3.0},
};

const char* kServices[] = {"checkout", "payments", "inventory", "search", "accounts"};
const char* kChangeSummaries[] = {
    "raise connection pool size", "update request router", "enable new pricing rules",
    "upgrade serialization library", "tune cache eviction", "rotate service credentials",
};
const ChangeType kChangeTypes[] = {ChangeType::ConfigChange, ChangeType::CodeDeploy, ChangeType::PatchFix,
                                   ChangeType::FeatureRollout};

constexpr int kPoints = 60;
constexpr int kChangeIndex = 30;
constexpr EpochSeconds kStep = 60;

std::string_view kind_words(FaultKind k) {
  switch (k) {
    case FaultKind::ResourceExhaustion: return "resource exhaustion";
    case FaultKind::ConfigError: return "configuration error";
    case FaultKind::CodeDefect: return "code defect";
    case FaultKind::DependencyFailure: return "dependency failure";
    case FaultKind::NetworkIssue: return "network issue";
    case FaultKind::DataIssue: return "data issue";
    case FaultKind::Other: return "miscellaneous";
  }
  return "";
}

FaultClass fault_class_of(const Scenario& s) { return {s.kind, s.kind == FaultKind::Other ? s.other_detail : ""}; }

FaultKind pick_kind(DeterministicRng& rng, const std::map<FaultKind, double>& mix) {
  if (mix.empty()) return kAllFaultKinds[rng.below(std::size(kAllFaultKinds))];
  double total = 0.0;
  for (const auto& [_, w] : mix) total += w;
  double u = rng.uniform() * total;
  FaultKind last = mix.begin()->first;
  for (const auto& [k, w] : mix) {
    if (w <= 0.0) continue;
    last = k;
    if (u < w) return k;
    u -= w;
  }
  return last;
}

const Scenario& pick_scenario(DeterministicRng& rng, FaultKind kind) {
  std::vector<const Scenario*> pool;
  for (const auto& s : kScenarios)
    if (s.kind == kind) pool.push_back(&s);
  return *pool[rng.below(pool.size())];
}

double injected(Shape shape, int post_index, double noise) {
  switch (shape) {
    case Shape::ShiftUp: return 12.0 * noise;
    case Shape::Ramp: return 1.5 * noise * (post_index + 1);
    case Shape::Spike: return post_index == 4 ? 15.0 * noise : 0.0;
    case Shape::Burst: return 0.0;
  }
  return 0.0;
}

std::vector<std::string> decoys_for(const Scenario& truth, std::uint64_t h) {
  std::vector<std::string> same, other;
  for (const auto& s : kScenarios) {
    if (&s == &truth) continue;
    (s.kind == truth.kind ? same : other).emplace_back(s.root_cause);
  }
  if (!other.empty()) std::rotate(other.begin(), other.begin() + static_cast<long>(h % other.size()), other.end());
  same.insert(same.end(), other.begin(), other.end());
  return same;
}

std::vector<std::string> normal_decoys(std::uint64_t h) {
  std::vector<std::string> all;
  for (const auto& s : kScenarios) all.emplace_back(s.root_cause);
  std::rotate(all.begin(), all.begin() + static_cast<long>(h % all.size()), all.end());
  return all;
}

struct GeneratedCase {
  CaseBundle bundle;
  ScriptEntry entry;
};

GeneratedCase make_case(DeterministicRng& rng, const std::string& ticket_id, EpochSeconds start,
                        const Scenario* scenario) {
  GeneratedCase out;
  auto& b = out.bundle;
  const auto service = std::string(kServices[rng.below(std::size(kServices))]);
  const auto change_type = kChangeTypes[rng.below(std::size(kChangeTypes))];
  const auto summary = std::string(kChangeSummaries[rng.below(std::size(kChangeSummaries))]);

  b.ticket.ticket_id = ticket_id;
  b.ticket.service = service;
  b.ticket.change_type = change_type;
  b.ticket.submit_time = start - 600;
  b.ticket.analysis_start = start;
  // The window closes at the end of the last log bucket, not at the last sample.
  b.ticket.analysis_end = start + kPoints * kStep - 1;
  b.ticket.description = std::string(to_string(change_type)) + " for " + service + ": " + summary;
  b.ticket.status = TicketStatus::Done;
  b.change_time = start + kChangeIndex * kStep;

  for (const auto& m : kMetrics) {
    MetricSeries s;
    s.name = m.name;
    s.unit = m.unit;
    const bool affected = scenario && s.name == scenario->metric;
    for (int k = 0; k < kPoints; ++k) {
      double noise = rng.uniform(-m.noise, m.noise);
      double v = m.base;
      if (affected && k >= kChangeIndex) {
        if (scenario->shape == Shape::Burst) noise *= 6.0;
        v += injected(scenario->shape, k - kChangeIndex, m.noise);
      }
      s.timestamps.push_back(start + k * kStep);
      s.values.push_back(v + noise);
    }
    b.metrics.push_back(std::move(s));
  }

  for (int k = 0; k < kPoints; ++k) {
    const EpochSeconds t = start + k * kStep + 5;
    auto& logs = k < kChangeIndex ? b.pre_change_logs : b.post_change_logs;
    logs.push_back({t, "INFO request served for user " + std::to_string(1000 + rng.below(9000)) + " in " +
                           std::to_string(20 + rng.below(80)) + " ms"});
    logs.push_back({t + 1, "INFO health check passed for " + service});
    if (k % 5 == 0)
      logs.push_back({t + 2, "DEBUG cache refresh completed with " + std::to_string(100 + rng.below(900)) + " entries"});
    if (scenario && k >= kChangeIndex) {
      logs.push_back({t + 3, scenario->log_line});
      logs.push_back({t + 4, scenario->log_line});
    }
  }

  GroundTruth gt;
  auto& e = out.entry;
  e.ticket_id = ticket_id;
  e.service = service;
  const auto h = fnv1a64(ticket_id);
  if (scenario) {
    gt.erroneous = true;
    gt.fault_type = fault_class_of(*scenario);
    gt.root_cause = scenario->root_cause;
    gt.resolution = scenario->resolution;
    e.symptom = scenario->symptom;
    e.log_line = scenario->log_line;
    e.decoys = decoys_for(*scenario, h);
  } else {
    e.decoys = normal_decoys(h);
  }
  b.ground_truth = gt;
  e.truth = gt;
  static const int kRankByBucket[10] = {1, 1, 1, 1, 1, 2, 2, 3, 5, 0};
  e.base_rank = kRankByBucket[h % 10];
  e.vague_first = ((h >> 16) % 4) == 0;
  return out;
}

std::vector<GeneratedCase> make_cases(DeterministicRng& rng, const std::string& prefix, std::size_t n,
                                      double erroneous_fraction, const std::map<FaultKind, double>& mix,
                                      EpochSeconds base) {
  const auto n_err = static_cast<std::size_t>(std::floor(erroneous_fraction * static_cast<double>(n) + 0.5));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<bool> erroneous(n, false);
  for (std::size_t i = 0; i < std::min(n_err, n); ++i) erroneous[order[i]] = true;

  std::vector<GeneratedCase> out;
  for (std::size_t i = 0; i < n; ++i) {
    char id[64];
    std::snprintf(id, sizeof id, "%s-%03zu", prefix.c_str(), i + 1);
    const Scenario* scenario = nullptr;
    if (erroneous[i]) scenario = &pick_scenario(rng, pick_kind(rng, mix));
    out.push_back(make_case(rng, id, base + static_cast<EpochSeconds>(i) * 7200, scenario));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scripted replies

enum class CoTMode { None, Vague, Full };

std::string full_cot(const ScriptEntry& e) {
  const auto& t = e.truth;
  std::string s;
  if (t.erroneous) {
    const auto fc = t.fault_type.value_or(FaultClass{});
    s += "OBSERVATION:\nAfter the change to the " + e.service + " service, " + e.symptom +
         ". A new log line appeared that never occurred before the change: " + e.log_line + ".\n";
    s += "ANOMALY_ANALYSIS:\nThe deviation starts at the change time and persists through the post-change "
         "window, and the new log line occurs only after the change, so the change is the trigger.\n";
    s += "FAULT_CLASSIFICATION:\nThe signals point to a " + std::string(kind_words(fc.kind)) + " fault (" +
         display_name(fc) + ").\n";
    s += "ROOT_CAUSE:\nThe most likely root cause is " + t.root_cause.value_or("unknown") + ", which explains why " +
         e.symptom + ".\n";
    s += "MITIGATION:\n" + t.resolution.value_or("Roll back the change") +
         ", then verify that the metrics return to their pre-change baseline.\n";
  } else {
    s += "OBSERVATION:\nAfter the change to the " + e.service +
         " service, all metrics stay within their usual range and no new log templates appeared.\n";
    s += "ANOMALY_ANALYSIS:\nNo signal deviates from its pre-change baseline.\n";
    s += "FAULT_CLASSIFICATION:\nNo fault category applies because nothing abnormal was observed.\n";
    s += "ROOT_CAUSE:\nThere is no root cause to report; the change looks healthy.\n";
    s += "MITIGATION:\nNo action is needed; proceed with the rollout and keep monitoring.\n";
  }
  return s;
}

std::string vague_cot(const ScriptEntry& e) {
  if (!e.truth.erroneous) return "OBSERVATION:\nLooks fine overall.\n";
  const auto fc = e.truth.fault_type.value_or(FaultClass{});
  return "OBSERVATION:\nIt's a " + std::string(kind_words(fc.kind)) + " issue overall.\n";
}

std::string scripted_reply(const ScriptEntry& e, int rank, CoTMode mode, bool ft, bool rcca) {
  const auto& t = e.truth;
  std::string s;
  if (t.erroneous) {
    s += "VERDICT: ERRONEOUS\nCONFIDENCE: 0.90\n";
    if (ft) s += "FAULT_CLASS: " + display_name(t.fault_type.value_or(FaultClass{})) + "\n";
    if (rcca) {
      std::vector<std::pair<std::string, std::string>> ranking;
      std::size_t d = 0;
      for (int pos = 1; pos <= static_cast<int>(kMaxRankedCauses); ++pos) {
        if (pos == rank) {
          ranking.emplace_back(t.root_cause.value_or("unknown"), "fits " + e.symptom + " and the new log line");
        } else if (d < e.decoys.size()) {
          ranking.emplace_back(e.decoys[d++], "weaker fit to the evidence");
        }
      }
      s += "ROOT_CAUSES:\n";
      for (std::size_t i = 0; i < ranking.size(); ++i)
        s += std::to_string(i + 1) + ". " + ranking[i].first + " | " + ranking[i].second + "\n";
    }
    s += "RECOMMENDED_ACTION: rollback\n";
  } else {
    s += "VERDICT: NORMAL\nCONFIDENCE: 0.85\n";
    if (ft) s += "FAULT_CLASS: NONE\n";
    if (rcca) s += "ROOT_CAUSES: NONE\n";
    s += "RECOMMENDED_ACTION: proceed\n";
  }
  if (mode == CoTMode::Full) s += full_cot(e);
  if (mode == CoTMode::Vague) s += vague_cot(e);
  return s;
}

bool contains(std::string_view hay, std::string_view needle) { return hay.find(needle) != std::string_view::npos; }

}  // namespace

ScriptedModel::ScriptedModel(std::map<std::string, ScriptEntry> script, std::size_t dim)
    : script_(std::move(script)), embedder_(dim) {}

std::string ScriptedModel::expert_reply(const ScriptEntry& entry) {
  return scripted_reply(entry, 1, CoTMode::Full, true, true);
}

std::string ScriptedModel::complete(const ChatRequest& request) {
  const std::string_view user = request.user_prompt;
  const auto cur = user.find(kCurrentHeader);
  if (cur == std::string_view::npos)
    throw Error(ErrorCode::UnscriptedPrompt, "scripted model: no current-change block in prompt");
  auto current = user.substr(cur);
  for (auto h : {kPreviousAnswerHeader, kFormatCorrectionHeader})
    if (auto p = current.find(h); p != std::string_view::npos) current = current.substr(0, p);
  const auto id_pos = current.find("Ticket ID: ");
  if (id_pos == std::string_view::npos)
    throw Error(ErrorCode::UnscriptedPrompt, "scripted model: no ticket id in prompt");
  auto id = current.substr(id_pos + 11);
  id = id.substr(0, id.find('\n'));
  const auto it = script_.find(std::string(trim(id)));
  if (it == script_.end())
    throw Error(ErrorCode::UnscriptedPrompt, "scripted model: unknown ticket " + std::string(id));
  const auto& e = it->second;

  const std::string_view context = user.substr(0, cur);
  const bool rewrite = contains(user, kPreviousAnswerHeader);
  const bool with_cot = contains(request.system_prompt, "OBSERVATION:");
  const bool ft = contains(request.system_prompt, "FAULT_CLASS:");
  const bool rcca = contains(request.system_prompt, "ROOT_CAUSES:");

  int rank = e.base_rank;
  if (e.truth.erroneous && e.truth.root_cause && contains(context, "Root cause: " + *e.truth.root_cause + "\n")) {
    rank = 1;
  } else if (rank > 0 && e.truth.erroneous) {
    // Less evidence in the prompt pushes the true cause down.
    if (!contains(current, "Metric ")) ++rank;
    if (contains(current, kOmittedMarker)) ++rank;
    if (rank > static_cast<int>(kMaxRankedCauses)) rank = 0;
  }

  CoTMode mode = CoTMode::None;
  if (with_cot) mode = (e.vague_first && !rewrite) ? CoTMode::Vague : CoTMode::Full;
  return scripted_reply(e, rank, mode, ft, rcca);
}

RecordingBackend::RecordingBackend(std::shared_ptr<ChatBackend> inner) : inner_(std::move(inner)) {}

std::string RecordingBackend::complete(const ChatRequest& request) {
  auto reply = inner_->complete(request);
  std::lock_guard lock(mutex_);
  recorded_.add(prompt_hash(request.system_prompt, request.user_prompt), reply);
  return reply;
}

Transcript RecordingBackend::transcript() const {
  std::lock_guard lock(mutex_);
  return recorded_;
}

// ---------------------------------------------------------------------------
// Corpus generation and files

KnowledgeBase GeneratedCorpus::history_kb(std::shared_ptr<const Embedder> embedder) const {
  KnowledgeBase kb(std::move(embedder));
  for (const auto& r : history) kb.add_case(r);
  return kb;
}

void to_json(Json& j, const GeneratedCorpus& v) {
  Json script = Json::object();
  for (const auto& [id, e] : v.script) script[id] = e;
  j = Json{{"spec", v.spec}, {"bundles", v.bundles}, {"history", v.history}, {"script", script}};
}

void from_json(const Json& j, GeneratedCorpus& v) {
  try {
    v = {};
    v.spec = j.at("spec").get<CorpusSpec>();
    v.bundles = j.at("bundles").get<std::vector<CaseBundle>>();
    v.history = j.value("history", std::vector<CaseRecord>{});
    if (j.contains("script"))
      for (const auto& [id, e] : j.at("script").items()) v.script[id] = e.get<ScriptEntry>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("corpus: ") + e.what());
  }
}

namespace {
std::string transcript_path_for(const std::string& corpus_path) {
  std::filesystem::path p(corpus_path);
  return (p.parent_path() / (p.stem().string() + ".transcript.json")).string();
}
}  // namespace

GeneratedCorpus load_corpus(const std::string& path) {
  auto corpus = read_json_file(path).get<GeneratedCorpus>();
  const auto tp = transcript_path_for(path);
  if (std::filesystem::exists(tp)) corpus.transcript = Transcript::load(tp);
  return corpus;
}

void save_corpus(const GeneratedCorpus& corpus, const std::string& path) {
  write_json_file(path, Json(corpus));
  corpus.transcript.save(transcript_path_for(path));
}

GeneratedCorpus generate_corpus(const CorpusSpec& spec, std::size_t embedding_dim) {
  spec.validate();
  GeneratedCorpus out;
  out.spec = spec;

  DeterministicRng rng(spec.seed);
  char prefix[48];
  std::snprintf(prefix, sizeof prefix, "CHG%llu", static_cast<unsigned long long>(spec.seed));
  for (auto& c : make_cases(rng, prefix, spec.n_cases, spec.erroneous_fraction, spec.fault_mix, spec.base_time)) {
    out.script[c.entry.ticket_id] = c.entry;
    out.bundles.push_back(std::move(c.bundle));
  }

  // History lives in its own stream and predates the corpus.
  DeterministicRng hrng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::snprintf(prefix, sizeof prefix, "HIST%llu", static_cast<unsigned long long>(spec.seed));
  const EpochSeconds hist_base = spec.base_time - 90 * 86400;
  const InferenceConfig base_cfg;
  const HashingEmbedder embedder(embedding_dim);
  for (auto& c : make_cases(hrng, prefix, spec.n_history, spec.history_erroneous_fraction, spec.fault_mix,
                            hist_base)) {
    const auto evidence = prepare_case(c.bundle, base_cfg);
    CaseRecord rec;
    rec.case_id = c.bundle.ticket.ticket_id;
    rec.domain_text = evidence.rendered;
    rec.report = parse_report(ScriptedModel::expert_reply(c.entry), base_cfg.taxonomy);
    rec.report.ticket_id = rec.case_id;
    rec.ground_truth = c.bundle.ground_truth;
    rec.embedding = embedder.embed(rec.domain_text);
    rec.admitted_by = Admission::Seed;
    rec.created_at = c.bundle.ticket.submit_time;
    out.script[c.entry.ticket_id] = c.entry;
    out.history.push_back(std::move(rec));
  }

  auto recorder = std::make_shared<RecordingBackend>(std::make_shared<ScriptedModel>(out.script, embedding_dim));
  ProviderConfig provider;
  provider.embedding_dim = embedding_dim;
  provider.max_retries = 0;
  const LlmGateway gateway(provider, recorder);
  const auto kb = out.history_kb(std::make_shared<HashingEmbedder>(embedding_dim));
  BenchConfig bench;
  bench.max_parallel = 1;
  std::vector<std::string> variants(std::begin(kStandardVariants), std::end(kStandardVariants));
  run_benchmark(out.bundles, &kb, gateway, bench, variants);
  out.transcript = recorder->transcript();
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

double harmonic_f1(double precision, double recall) {
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

bool root_cause_matches(std::string_view candidate, std::string_view truth, bool lenient) {
  const auto c = normalize_answer(candidate);
  const auto t = normalize_answer(truth);
  if (c.empty() || t.empty()) return false;
  if (c == t) return true;
  return lenient && (contains(c, t) || contains(t, c));
}

void to_json(Json& j, const MetricsTable& v) {
  auto scores = [](const TaskScores& s) {
    return Json{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
  };
  Json rcca = scores(v.rcca);
  rcca["top1"] = v.top1;
  rcca["top3"] = v.top3;
  rcca["top5"] = v.top5;
  rcca["avg_at_5"] = v.avg_at_5;
  j = Json{{"ecd", scores(v.ecd)},
           {"ft", scores(v.ft)},
           {"rcca", rcca},
           {"runtime", {{"mean_s", v.runtime_mean_s}, {"median_s", v.runtime_median_s}}},
           {"n_cases", v.n_cases},
           {"n_erroneous", v.n_erroneous}};
}

void from_json(const Json& j, MetricsTable& v) {
  try {
    auto scores = [](const Json& s) {
      return TaskScores{s.at("precision").get<double>(), s.at("recall").get<double>(), s.at("f1").get<double>()};
    };
    v = {};
    v.ecd = scores(j.at("ecd"));
    v.ft = scores(j.at("ft"));
    v.rcca = scores(j.at("rcca"));
    v.top1 = j.at("rcca").at("top1").get<double>();
    v.top3 = j.at("rcca").at("top3").get<double>();
    v.top5 = j.at("rcca").at("top5").get<double>();
    v.avg_at_5 = j.at("rcca").at("avg_at_5").get<double>();
    v.runtime_mean_s = j.at("runtime").at("mean_s").get<double>();
    v.runtime_median_s = j.at("runtime").at("median_s").get<double>();
    v.n_cases = j.at("n_cases").get<std::size_t>();
    v.n_erroneous = j.at("n_erroneous").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("metrics table: ") + e.what());
  }
}

std::string canonical_metrics_json(const MetricsTable& v) {
  Json j = v;
  j.erase("runtime");
  return j.dump();
}

std::vector<LabeledTruth> truths_of(const std::vector<CaseBundle>& bundles) {
  std::vector<LabeledTruth> out;
  for (const auto& b : bundles) {
    if (!b.ground_truth)
      throw Error(ErrorCode::Misaligned, "case " + b.ticket.ticket_id + " has no ground truth", b.ticket.ticket_id);
    out.push_back({b.ticket.ticket_id, *b.ground_truth});
  }
  return out;
}

namespace {

double safe_div(double num, double den) { return den > 0.0 ? num / den : 0.0; }

// 1-based rank of the first matching candidate within the top five, 0 if none.
int hit_rank(const AnalysisReport& r, const GroundTruth& t, bool lenient) {
  if (!t.root_cause) return 0;
  const auto n = std::min(r.root_cause_ranking.size(), kMaxRankedCauses);
  for (std::size_t i = 0; i < n; ++i)
    if (root_cause_matches(r.root_cause_ranking[i].candidate, *t.root_cause, lenient)) return static_cast<int>(i) + 1;
  return 0;
}

}  // namespace

MetricsTable compute_metrics(const std::vector<AnalysisReport>& reports, const std::vector<LabeledTruth>& truths,
                             const MetricsOptions& options) {
  std::map<std::string, const AnalysisReport*> by_id;
  for (const auto& r : reports)
    if (!by_id.emplace(r.ticket_id, &r).second)
      throw Error(ErrorCode::Misaligned, "duplicate report for " + r.ticket_id, r.ticket_id);
  std::set<std::string> seen;
  for (const auto& t : truths) {
    if (!seen.insert(t.ticket_id).second)
      throw Error(ErrorCode::Misaligned, "duplicate truth for " + t.ticket_id, t.ticket_id);
    if (!by_id.count(t.ticket_id))
      throw Error(ErrorCode::Misaligned, "no report for " + t.ticket_id, t.ticket_id);
  }
  if (seen.size() != by_id.size()) {
    for (const auto& [id, _] : by_id)
      if (!seen.count(id)) throw Error(ErrorCode::Misaligned, "no truth for " + id, id);
  }

  MetricsTable m;
  m.n_cases = truths.size();
  std::size_t tp = 0, fp = 0, fn = 0;
  std::map<std::string, std::array<std::size_t, 3>> ft;  // class -> tp, fp, fn
  std::size_t hits[6] = {0, 0, 0, 0, 0, 0};
  double rr = 0.0;
  std::size_t ranked = 0, top1_hits_all = 0;
  std::vector<double> runtimes;

  for (const auto& t : truths) {
    const auto& r = *by_id.at(t.ticket_id);
    runtimes.push_back(static_cast<double>(r.elapsed_ms) / 1000.0);
    const bool truth_pos = t.truth.erroneous;
    if (r.ecd_verdict && truth_pos) ++tp;
    if (r.ecd_verdict && !truth_pos) ++fp;
    if (!r.ecd_verdict && truth_pos) ++fn;

    if (!r.root_cause_ranking.empty()) ++ranked;
    if (!truth_pos) continue;
    ++m.n_erroneous;

    const std::string truth_cls = t.truth.fault_type ? display_name(*t.truth.fault_type) : "";
    const std::string pred_cls = r.fault_class ? display_name(*r.fault_class) : "";
    if (!truth_cls.empty()) ft[truth_cls];
    if (!pred_cls.empty()) ft[pred_cls];
    if (!pred_cls.empty() && pred_cls == truth_cls) {
      ++ft[truth_cls][0];
    } else {
      if (!pred_cls.empty()) ++ft[pred_cls][1];
      if (!truth_cls.empty()) ++ft[truth_cls][2];
    }

    const int rank = hit_rank(r, t.truth, options.lenient_match);
    if (rank > 0) {
      for (int k = rank; k <= 5; ++k) ++hits[k];
      rr += 1.0 / rank;
      if (rank == 1) ++top1_hits_all;
    }
  }

  m.ecd.precision = safe_div(tp, tp + fp);
  m.ecd.recall = safe_div(tp, tp + fn);
  m.ecd.f1 = harmonic_f1(m.ecd.precision, m.ecd.recall);

  if (!ft.empty()) {
    double p = 0.0, r = 0.0;
    for (const auto& [_, c] : ft) {
      p += safe_div(c[0], c[0] + c[1]);
      r += safe_div(c[0], c[0] + c[2]);
    }
    m.ft.precision = p / static_cast<double>(ft.size());
    m.ft.recall = r / static_cast<double>(ft.size());
    m.ft.f1 = harmonic_f1(m.ft.precision, m.ft.recall);
  }

  const auto n_err = static_cast<double>(m.n_erroneous);
  m.top1 = safe_div(hits[1], n_err);
  m.top3 = safe_div(hits[3], n_err);
  m.top5 = safe_div(hits[5], n_err);
  m.avg_at_5 = options.avg_mode == AvgMode::ReciprocalRank ? safe_div(rr, n_err) : m.top5;
  m.rcca.precision = safe_div(top1_hits_all, ranked);
  m.rcca.recall = safe_div(top1_hits_all, n_err);
  m.rcca.f1 = harmonic_f1(m.rcca.precision, m.rcca.recall);

  if (!runtimes.empty()) {
    m.runtime_mean_s = std::accumulate(runtimes.begin(), runtimes.end(), 0.0) / static_cast<double>(runtimes.size());
    std::sort(runtimes.begin(), runtimes.end());
    const auto n = runtimes.size();
    m.runtime_median_s = n % 2 ? runtimes[n / 2] : (runtimes[n / 2 - 1] + runtimes[n / 2]) / 2.0;
  }
  return m;
}

std::string render_metrics_table(const std::vector<std::pair<std::string, MetricsTable>>& rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %7s %7s %7s %7s %7s %7s %7s %9s %9s\n", "variant", "ECD_F1", "FT_F1",
                "RCCA_F1", "Top1", "Top3", "Top5", "AVG@5", "mean_s", "median_s");
  out += line;
  for (const auto& [name, m] : rows) {
    std::snprintf(line, sizeof line, "%-10s %7.3f %7.3f %7.3f %7.3f %7.3f %7.3f %7.3f %9.4f %9.4f\n", name.c_str(),
                  m.ecd.f1, m.ft.f1, m.rcca.f1, m.top1, m.top3, m.top5, m.avg_at_5, m.runtime_mean_s,
                  m.runtime_median_s);
    out += line;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark runs

bool is_known_variant(std::string_view variant) {
  return std::find(std::begin(kStandardVariants), std::end(kStandardVariants), variant) != std::end(kStandardVariants);
}

InferenceConfig variant_config(const InferenceConfig& base, std::string_view variant) {
  InferenceConfig c = base;
  c.flags = {};
  c.refine = true;
  if (variant == "full") return c;
  if (variant == "none") {
    c.flags.drop_rag = true;
    c.flags.drop_cot = true;
  } else if (variant == "rag_only" || variant == "no_cot") {
    c.flags.drop_cot = true;
  } else if (variant == "rag_scot") {
    c.refine = false;
  } else if (variant == "A1") {
    c.flags.drop_descriptions = true;
  } else if (variant == "A2") {
    c.flags.drop_detector = true;
  } else if (variant == "no_rag") {
    c.flags.drop_rag = true;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown variant " + std::string(variant), std::string(variant));
  }
  return c;
}

void to_json(Json& j, const VariantResult& v) {
  Json failures = Json::array();
  for (const auto& f : v.failures)
    failures.push_back({{"ticket_id", f.ticket_id}, {"code", f.code}, {"message", f.message}});
  Json runtimes = Json::object();
  for (const auto& r : v.reports) runtimes[r.ticket_id] = r.elapsed_ms;
  j = Json{{"variant", v.variant},   {"metrics", v.metrics},        {"failures", failures},
           {"reports", v.reports},   {"runtime_ms", runtimes}};
}

VariantResult run_variant(const std::vector<CaseBundle>& bundles, const KnowledgeBase* kb, const LlmGateway& gateway,
                          const BenchConfig& cfg, std::string_view variant) {
  const auto icfg = variant_config(cfg.inference, variant);
  icfg.validate();
  const auto n = bundles.size();
  std::vector<std::optional<AnalysisRun>> runs(n);
  std::vector<std::optional<CaseFailure>> failed(n);

  const int threads = std::max(1, cfg.max_parallel);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    const auto& b = bundles[static_cast<std::size_t>(i)];
    try {
      runs[static_cast<std::size_t>(i)] = run_case(b, kb, gateway, icfg, variant);
    } catch (const Error& e) {
      failed[static_cast<std::size_t>(i)] =
          CaseFailure{b.ticket.ticket_id, std::string(error_code_name(e.code())), e.what()};
    } catch (const std::exception& e) {
      failed[static_cast<std::size_t>(i)] = CaseFailure{b.ticket.ticket_id, "Internal", e.what()};
    }
  }

  VariantResult out;
  out.variant = std::string(variant);
  for (std::size_t i = 0; i < n; ++i) {
    if (runs[i]) {
      out.reports.push_back(runs[i]->report);
      out.audits.push_back(std::move(runs[i]->audit));
    } else {
      AnalysisReport placeholder;
      placeholder.ticket_id = bundles[i].ticket.ticket_id;
      placeholder.warnings.push_back("analysis failed: " + failed[i]->code + ": " + failed[i]->message);
      out.reports.push_back(std::move(placeholder));
      out.failures.push_back(*failed[i]);
    }
  }
  out.metrics = compute_metrics(out.reports, truths_of(bundles), cfg.metrics);
  return out;
}

std::vector<VariantResult> run_benchmark(const std::vector<CaseBundle>& bundles, const KnowledgeBase* kb,
                                         const LlmGateway& gateway, const BenchConfig& cfg,
                                         const std::vector<std::string>& variants) {
  for (const auto& v : variants)
    if (!is_known_variant(v)) throw Error(ErrorCode::InvalidArgument, "unknown variant " + v, v);
  std::vector<VariantResult> out;
  for (const auto& v : variants) out.push_back(run_variant(bundles, kb, gateway, cfg, v));
  return out;
}

std::string canonical_reports(const std::vector<AnalysisReport>& reports) {
  std::string out;
  for (const auto& r : reports) out += canonical_report_json(r).dump() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

std::string_view to_string(SweepKind k) { return k == SweepKind::ColdStart ? "coldstart" : "feedback"; }

std::optional<SweepKind> parse_sweep_kind(std::string_view s) {
  const auto v = to_lower(trim(s));
  if (v == "coldstart" || v == "cold_start" || v == "cold-start") return SweepKind::ColdStart;
  if (v == "feedback" || v == "feedbackratio" || v == "feedback_ratio" || v == "feedback-ratio")
    return SweepKind::FeedbackRatio;
  return std::nullopt;
}

void to_json(Json& j, const SweepPoint& v) {
  j = Json{{"fraction", v.fraction},
           {"seed", v.seed},
           {"kb_size", v.kb_size},
           {"retrieved_total", v.retrieved_total},
           {"retrieved_chars", v.retrieved_chars},
           {"corrections", v.corrections},
           {"prompts_changed", v.prompts_changed},
           {"metrics", v.metrics}};
}

bool case_failed(const AnalysisReport& report, const GroundTruth& truth, const MetricsOptions& options) {
  if (report.ecd_verdict != truth.erroneous) return true;
  if (!truth.erroneous) return false;
  return hit_rank(report, truth, options.lenient_match) != 1;
}

namespace {

SweepPoint point_from(const VariantResult& r, double fraction, std::uint64_t seed, std::size_t kb_size) {
  SweepPoint p;
  p.fraction = fraction;
  p.seed = seed;
  p.kb_size = kb_size;
  p.metrics = r.metrics;
  for (const auto& a : r.audits) {
    p.retrieved_total += a.retrieved.size();
    const auto cur = a.user_prompt.find(kCurrentHeader);
    if (!a.retrieved.empty() && cur != std::string::npos) p.retrieved_chars += cur;
  }
  p.audits = r.audits;
  return p;
}

}  // namespace

std::vector<SweepPoint> sweep(const SweepConfig& sweep_cfg, const std::vector<CaseBundle>& bundles,
                              const KnowledgeBase& history, const LlmGateway& gateway, const BenchConfig& cfg) {
  for (double f : sweep_cfg.fractions)
    if (!(f >= 0.0 && f <= 1.0)) throw Error(ErrorCode::InvalidArgument, "sweep fractions must be in [0,1]");
  if (!is_known_variant(sweep_cfg.variant))
    throw Error(ErrorCode::InvalidArgument, "unknown variant " + sweep_cfg.variant, sweep_cfg.variant);
  const auto seeds = sweep_cfg.seeds.empty() ? std::vector<std::uint64_t>{0} : sweep_cfg.seeds;
  std::vector<SweepPoint> out;

  if (sweep_cfg.kind == SweepKind::ColdStart) {
    for (double f : sweep_cfg.fractions) {
      for (auto seed : seeds) {
        const auto kb = history.sample_fraction(f, seed);
        const auto r = run_variant(bundles, &kb, gateway, cfg, sweep_cfg.variant);
        out.push_back(point_from(r, f, seed, kb.size()));
      }
    }
    return out;
  }

  // In-memory copy so corrections never touch the history log on disk.
  const auto base_kb = history.sample_fraction(1.0, 0);
  const auto baseline = run_variant(bundles, &base_kb, gateway, cfg, sweep_cfg.variant);
  std::map<std::string, const AuditRecord*> base_audit;
  for (const auto& a : baseline.audits) base_audit[a.ticket_id] = &a;
  std::vector<std::size_t> failed;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    const auto& b = bundles[i];
    if (!b.ground_truth || !base_audit.count(b.ticket.ticket_id)) continue;
    if (case_failed(baseline.reports[i], *b.ground_truth, cfg.metrics)) failed.push_back(i);
  }

  for (double f : sweep_cfg.fractions) {
    for (auto seed : seeds) {
      auto order = failed;
      DeterministicRng rng(seed);
      rng.shuffle(order);
      const auto n_label =
          std::min(order.size(), static_cast<std::size_t>(std::floor(f * static_cast<double>(order.size()) + 0.5)));
      auto kb = history.sample_fraction(1.0, 0);
      AuditStore audits;
      FeedbackStore feedback;
      for (const auto& a : baseline.audits) audits.put(a);
      for (std::size_t i = 0; i < n_label; ++i) {
        const auto& b = bundles[order[i]];
        const auto& audit = *base_audit.at(b.ticket.ticket_id);
        FeedbackRecord bad;
        bad.report_id = audit.report_id;
        bad.label = Label::Bad;
        bad.corrected_truth = *b.ground_truth;
        bad.judge = "sweep";
        bad.created_at = sweep_cfg.now;
        feedback.record(bad, audits);
        apply_case_update(audit, feedback.active(audit.report_id), kb, sweep_cfg.now);
        admit_correction(audit, *b.ground_truth, "sweep", sweep_cfg.now, audits, feedback, kb);
      }
      const auto r = run_variant(bundles, &kb, gateway, cfg, sweep_cfg.variant);
      auto p = point_from(r, f, seed, kb.size());
      p.corrections = n_label;
      for (const auto& a : r.audits) {
        auto it = base_audit.find(a.ticket_id);
        if (it == base_audit.end() || it->second->user_prompt != a.user_prompt) ++p.prompts_changed;
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::string sweep_plot_data(const std::vector<SweepPoint>& points) {
  std::string out = "fraction,seed,kb_size,retrieved_total,ecd_f1,ft_f1,rcca_top1,avg_at_5\n";
  char line[256];
  for (const auto& p : points) {
    std::snprintf(line, sizeof line, "%.4f,%llu,%zu,%zu,%.6f,%.6f,%.6f,%.6f\n", p.fraction,
                  static_cast<unsigned long long>(p.seed), p.kb_size, p.retrieved_total, p.metrics.ecd.f1,
                  p.metrics.ft.f1, p.metrics.top1, p.metrics.avg_at_5);
    out += line;
  }
  return out;
}

}  // namespace changelens
