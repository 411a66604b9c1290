// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when
// any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "changelens/cotscore.hpp"
#include "changelens/domain_text.hpp"
#include "changelens/evalharness.hpp"
#include "changelens/feedback.hpp"
#include "changelens/inference.hpp"
#include "changelens/knowledge_base.hpp"
#include "changelens/llm_gateway.hpp"
#include "changelens/serialization.hpp"
#include "oracles.hpp"

using namespace changelens;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
  void fail(const std::string& why) {
    if (ok) detail.clear();
    ok = false;
    if (!detail.empty()) detail += "; ";
    detail += why;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream ss;
  ss.precision(digits);
  ss << v;
  return ss.str();
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("changelens-acceptance-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Shared by the determinism, ablation, cold-start and feedback criteria.
struct BenchFixture {
  GeneratedCorpus corpus;
  std::vector<VariantResult> first;
  std::vector<VariantResult> second;
  double seconds = 0.0;
};

BenchFixture& bench_fixture() {
  static BenchFixture fx = [] {
    BenchFixture f;
    const auto t0 = std::chrono::steady_clock::now();
    CorpusSpec spec;
    spec.seed = 42;
    spec.n_cases = 20;
    f.corpus = generate_corpus(spec);
    std::vector<std::string> variants(std::begin(kStandardVariants), std::end(kStandardVariants));
    for (auto* out : {&f.first, &f.second}) {
      ProviderConfig pc;
      pc.transcript_path = "(corpus transcript)";
      auto gateway = std::make_shared<LlmGateway>(pc, std::make_shared<MockBackend>(f.corpus.transcript, 1024, true));
      const auto kb = f.corpus.history_kb(gateway);
      *out = run_benchmark(f.corpus.bundles, &kb, *gateway, BenchConfig{}, variants);
    }
    f.seconds = seconds_since(t0);
    return f;
  }();
  return fx;
}

const VariantResult& variant_of(const std::vector<VariantResult>& rs, std::string_view name) {
  for (const auto& r : rs)
    if (r.variant == name) return r;
  throw std::runtime_error("variant missing: " + std::string(name));
}

// ---------------------------------------------------------------------------

Outcome drain_oracle() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  DeterministicRng rng(7);
  std::size_t events = 0;
  for (int c = 0; c < 25; ++c) {
    const auto corpus = oracle::random_log_corpus(rng, 50);
    events += corpus.events.size();
    const auto expected = oracle::drain_oracle(corpus.events);
    const auto table = mine_templates(corpus.events, DrainConfig{});
    std::vector<oracle::OracleTemplate> got;
    for (const auto& t : table.templates()) got.push_back({t.tokens, t.support, {}});
    std::sort(got.begin(), got.end());
    bool same = got.size() == expected.size();
    for (std::size_t i = 0; same && i < got.size(); ++i)
      same = got[i].tokens == expected[i].tokens && got[i].support == expected[i].support;
    // Partition check: every oracle group maps onto one distinct template.
    std::set<int> ids;
    for (const auto& g : expected) {
      std::set<int> group_ids;
      for (auto m : g.members) {
        const auto r = match_log(table, corpus.events[m]);
        group_ids.insert(r.template_id.value_or(-1));
      }
      same = same && group_ids.size() == 1 && *group_ids.begin() >= 0 && ids.insert(*group_ids.begin()).second;
    }
    if (!same) o.fail("corpus " + std::to_string(c) + " differs from the oracle grouping");
  }
  const double secs = seconds_since(t0);
  if (secs >= 1.0) o.fail("runtime " + fmt(secs) + " s");
  if (o.ok) o.detail = "25 corpora, " + std::to_string(events) + " events, " + fmt(secs, 3) + " s";
  return o;
}

Outcome pattern_oracle() {
  Outcome o;
  const auto suite = oracle::shape_suite(2024);
  std::size_t correct = 0;
  std::map<std::string, int> confusions;
  for (const auto& s : suite) {
    const auto got = classify_pattern(s.series, s.change_time).pattern;
    if (got == s.label) {
      ++correct;
    } else {
      ++confusions[std::string(to_string(s.label)) + "->" + std::string(to_string(got))];
    }
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(suite.size());
  if (acc < 0.95) o.fail("accuracy " + fmt(acc));

  DeterministicRng rng(99);
  int flips = 0;
  for (int i = 0; i < 100; ++i) {
    const auto cls = kAllPatternClasses[rng.below(8)];
    const auto s = oracle::labeled_shape(rng, cls);
    const double a = std::pow(10.0, rng.uniform(-3.0, 3.0));
    const double b = rng.uniform(-1e4, 1e4);
    auto scaled = s.series;
    for (auto& v : scaled.values) v = a * v + b;
    if (classify_pattern(s.series, s.change_time).pattern != classify_pattern(scaled, s.change_time).pattern) ++flips;
  }
  if (flips != 0) o.fail(std::to_string(flips) + " class flips under rescaling");
  std::string conf;
  for (const auto& [k, n] : confusions) conf += " " + k + "x" + std::to_string(n);
  o.detail = (o.ok ? "" : o.detail + "; ") + "accuracy " + fmt(acc) + " on " + std::to_string(suite.size()) +
             " shapes, " + std::to_string(flips) + " flips in 100 rescalings" + (conf.empty() ? "" : ";" + conf);
  return o;
}

Outcome normalization() {
  Outcome o;
  auto series = [](std::vector<double> v) {
    MetricSeries s;
    s.name = "x";
    for (std::size_t i = 0; i < v.size(); ++i) s.timestamps.push_back(static_cast<EpochSeconds>(i));
    s.values = std::move(v);
    return s;
  };
  struct Case {
    std::vector<double> in, out;
  };
  const std::vector<Case> cases = {
      {{1, 2, 3}, {-1.2247, 0, 1.2247}},
      {{2, 4, 4, 4, 5, 5, 7, 9}, {-1.5, -0.5, -0.5, -0.5, 0, 0, 1, 2}},
      {{-3, 3}, {-1, 1}},
      {{5, 5, 5}, {0, 0, 0}},
      {{7}, {0}},
  };
  for (const auto& c : cases) {
    const auto z = normalize(series(c.in));
    if (z.values.size() != c.out.size()) {
      o.fail("length changed");
      continue;
    }
    for (std::size_t i = 0; i < c.out.size(); ++i)
      if (std::fabs(z.values[i] - c.out[i]) > 1e-4) o.fail("value " + fmt(z.values[i]) + " vs " + fmt(c.out[i]));
    if (z.timestamps != series(c.in).timestamps || z.name != "x") o.fail("name or timestamps not preserved");
  }
  if (o.ok) o.detail = std::to_string(cases.size()) + " fixtures within 1e-4, zero-variance guard holds";
  return o;
}

Outcome cotscore_properties() {
  Outcome o;
  const HashingEmbedder emb(1024);
  const CoTConfig cfg;
  const auto reference = segment_cot(read_text(oracle::fixture_path("cot_reference.txt")));
  const auto structured = segment_cot(read_text(oracle::fixture_path("cot_structured.txt")));
  const auto vague = segment_cot(read_text(oracle::fixture_path("cot_vague.txt")));

  const auto self = score_cot(reference, reference, cfg, emb).aggregate;
  if (std::fabs(self - 1.0) > 1e-6) o.fail("identity " + fmt(self, 10));

  static const std::vector<std::string> vocab = {
      "memory", "heap",    "cache",  "deploy",  "release", "rollback", "latency", "cpu",   "disk",   "config",
      "error",  "timeout", "retry",  "pool",    "thread",  "leak",     "spike",   "steady", "shift", "after",
      "the",    "a",       "of",     "service", "request", "queue",    "network", "dns",    "token", "schema"};
  DeterministicRng rng(5);
  auto random_text = [&](std::size_t lo, std::size_t hi) {
    std::vector<std::string> w;
    const auto n = lo + rng.below(hi - lo + 1);
    for (std::size_t i = 0; i < n; ++i) w.push_back(rng.pick(vocab));
    return join(w, " ");
  };
  auto random_sections = [&](bool allow_missing) {
    std::vector<CoTSection> out;
    for (auto k : kAllCoTKinds)
      if (!allow_missing || rng.bernoulli(0.7)) out.push_back({k, random_text(1, 25)});
    if (out.empty()) out.push_back({CoTKind::RootCause, random_text(1, 25)});
    return out;
  };
  std::size_t out_of_bounds = 0, self_misses = 0, increases = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto cand = random_sections(true);
    const auto ref = random_sections(true);
    for (auto method : {SimilarityMethod::GreedyTokenF1, SimilarityMethod::SentenceCosine}) {
      CoTConfig c = cfg;
      c.method = method;
      const auto r = score_cot(cand, ref, c, emb);
      bool bounded = r.aggregate >= 0.0 && r.aggregate <= 1.0;
      for (const auto& [_, s] : r.per_section) bounded = bounded && s >= 0.0 && s <= 1.0;
      if (!bounded) ++out_of_bounds;
    }
    if (i < 200) {
      const auto full = random_sections(false);
      if (std::fabs(score_cot(full, full, cfg, emb).aggregate - 1.0) > 1e-6) ++self_misses;
      // Corrupt one candidate section with tokens unrelated to the reference:
      // outside the vocabulary and in hash buckets no reference token uses.
      auto corrupted = cand;
      auto& victim = corrupted[rng.below(corrupted.size())];
      std::set<std::size_t> used;
      for (const auto& s : ref)
        for (const auto& t : word_tokens(s.text)) used.insert(emb.bucket(t));
      std::vector<std::string> junk;
      while (junk.size() < 8) {
        auto t = "zz" + std::string(1, static_cast<char>('a' + rng.below(26))) + "qx" + std::to_string(rng.below(100));
        if (!used.count(emb.bucket(t))) junk.push_back(std::move(t));
      }
      victim.text = join(junk, " ");
      if (score_cot(corrupted, ref, cfg, emb).aggregate > score_cot(cand, ref, cfg, emb).aggregate + 1e-12)
        ++increases;
    }
  }
  if (out_of_bounds) o.fail(std::to_string(out_of_bounds) + " scores outside [0,1]");
  if (self_misses) o.fail(std::to_string(self_misses) + " fuzzed identity misses");
  if (increases) o.fail(std::to_string(increases) + " corruptions increased the aggregate");

  const double s_full = score_cot(structured, reference, cfg, emb).aggregate;
  const double s_vague = score_cot(vague, reference, cfg, emb).aggregate;
  const double r = s_vague > 0 ? s_full / s_vague : 0.0;
  if (r < 2.0) o.fail("structured/vague ratio " + fmt(r));
  if (s_vague < 0.1 || s_vague > 0.3) o.fail("vague fixture " + fmt(s_vague) + " outside the 0.1-0.3 band");
  if (s_vague >= cfg.threshold) o.fail("vague fixture passes the gate");
  const std::string summary = "identity " + fmt(self, 8) + ", 1000 fuzzed pairs bounded, 200 corruptions monotone, "
                              "structured " + fmt(s_full, 3) + " vs vague " + fmt(s_vague, 3) + " (ratio " +
                              fmt(r, 3) + ")";
  o.detail = o.ok ? summary : o.detail + "; " + summary;
  return o;
}

Outcome retrieval_exactness() {
  Outcome o;
  DeterministicRng rng(11);
  const std::size_t dim = 64;
  auto embedder = std::make_shared<HashingEmbedder>(dim);
  const auto dir = scratch_dir("retrieval");
  std::size_t queries = 0;
  for (std::size_t n : {1, 7, 50, 200, 500}) {
    const auto path = (dir / ("kb" + std::to_string(n) + ".jsonl")).string();
    auto kb = KnowledgeBase::open(path, embedder);
    std::vector<std::pair<std::string, std::vector<double>>> rows;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> v(dim);
      for (auto& x : v) x = rng.normal();
      CaseRecord rec;
      rec.case_id = "R" + std::to_string(i);
      rec.domain_text = "record " + std::to_string(i);
      rec.embedding = EmbeddingVector::normalized(v);
      rows.emplace_back(rec.case_id, v);
      kb.add_case(rec);
    }
    const auto reopened = KnowledgeBase::open(path, embedder);
    for (int q = 0; q < 20; ++q, ++queries) {
      std::vector<double> v(dim);
      for (auto& x : v) x = rng.normal();
      const std::size_t k = 1 + rng.below(12);
      const double min_sim = q % 4 == 0 ? rng.uniform(0.0, 0.2) : 0.0;
      const auto expected = oracle::brute_force_ranking(rows, v, k, min_sim);
      const RetrievalConfig rc{k, min_sim};
      for (const KnowledgeBase* base : {static_cast<const KnowledgeBase*>(&kb), &reopened}) {
        const auto got = base->retrieve_embedding(EmbeddingVector::normalized(v), rc);
        bool same = got.size() == expected.size();
        for (std::size_t i = 0; same && i < got.size(); ++i)
          same = got[i].record.case_id == expected[i].id && std::fabs(got[i].similarity - expected[i].score) < 1e-9;
        if (!same) o.fail("ranking differs at n=" + std::to_string(n) + (base == &kb ? "" : " after reopen"));
      }
    }
    for (std::size_t i = 0; i < n; i += std::max<std::size_t>(1, n / 10)) {
      const auto self = reopened.retrieve_embedding(EmbeddingVector::normalized(rows[i].second), {1, 0.0});
      if (self.empty() || self[0].record.case_id != rows[i].first || std::fabs(self[0].similarity - 1.0) > 1e-6)
        o.fail("self query miss for " + rows[i].first);
    }
  }
  fs::remove_all(dir);
  if (o.ok) o.detail = std::to_string(queries) + " queries on KBs up to 500 records, in memory and after reopen";
  return o;
}

Outcome end_to_end_determinism() {
  Outcome o;
  auto& fx = bench_fixture();
  for (std::size_t v = 0; v < fx.first.size(); ++v) {
    const auto& a = fx.first[v];
    const auto& b = fx.second[v];
    if (canonical_reports(a.reports) != canonical_reports(b.reports)) o.fail(a.variant + " reports differ");
    if (canonical_metrics_json(a.metrics) != canonical_metrics_json(b.metrics)) o.fail(a.variant + " metrics differ");
    if (!a.failures.empty()) o.fail(a.variant + " had " + std::to_string(a.failures.size()) + " case failures");
  }
  const auto& full = variant_of(fx.first, "full");
  if (full.metrics.ecd.f1 != 1.0) o.fail("full ECD F1 " + fmt(full.metrics.ecd.f1));
  if (fx.seconds >= 30.0) o.fail("runtime " + fmt(fx.seconds) + " s");
  const std::string summary = std::to_string(fx.first.size()) + " variants x 20 cases, two runs identical, full ECD F1 " +
                              fmt(full.metrics.ecd.f1) + ", " + fmt(fx.seconds, 3) + " s";
  o.detail = o.ok ? summary : o.detail;
  return o;
}

std::string current_block(const std::string& prompt) {
  const auto at = prompt.find(kCurrentHeader);
  return at == std::string::npos ? prompt : prompt.substr(at);
}

Outcome ablation_structure() {
  Outcome o;
  auto& fx = bench_fixture();
  std::map<std::string, CaseEvidence> evidence;
  for (const auto& b : fx.corpus.bundles) evidence.emplace(b.ticket.ticket_id, prepare_case(b, InferenceConfig{}));

  std::size_t sentences = 0;
  const auto& a1 = variant_of(fx.first, "A1");
  for (const auto& audit : a1.audits) {
    const auto& ev = evidence.at(audit.ticket_id).evidence;
    for (const auto& f : ev.findings) {
      ++sentences;
      if (audit.user_prompt.find(f.description) != std::string::npos) o.fail("A1 " + audit.ticket_id + " keeps a finding description");
    }
    for (const auto& c : ev.comparisons) {
      ++sentences;
      if (!c.summary.empty() && audit.user_prompt.find(c.summary) != std::string::npos)
        o.fail("A1 " + audit.ticket_id + " keeps a comparison summary");
    }
  }

  std::size_t a2_checked = 0;
  const auto& a2 = variant_of(fx.first, "A2");
  for (const auto& audit : a2.audits) {
    const auto block = current_block(audit.user_prompt);
    for (auto p : kAllPatternClasses)
      if (p != PatternClass::NoChange && block.find(std::string(to_string(p))) != std::string::npos)
        o.fail("A2 " + audit.ticket_id + " names pattern " + std::string(to_string(p)));
    for (const auto& f : evidence.at(audit.ticket_id).evidence.findings)
      if (block.find(f.description) != std::string::npos) o.fail("A2 " + audit.ticket_id + " keeps a finding");
    if (block.find(kOmittedMarker) == std::string::npos) o.fail("A2 " + audit.ticket_id + " lacks the omitted marker");
    ++a2_checked;
  }

  std::size_t rag_checked = 0;
  const auto& no_rag = variant_of(fx.first, "no_rag");
  for (const auto& audit : no_rag.audits) {
    if (audit.user_prompt.find(kRetrievedHeader) != std::string::npos || audit.user_prompt.find("#### Case") != std::string::npos ||
        !audit.retrieved.empty())
      o.fail("no_rag " + audit.ticket_id + " carries retrieved cases");
    ++rag_checked;
  }
  // The check is only meaningful if the full variant does show retrieved text.
  const auto& full = variant_of(fx.first, "full");
  std::size_t full_with_rag = 0;
  for (const auto& audit : full.audits)
    if (audit.user_prompt.find(kRetrievedHeader) != std::string::npos) ++full_with_rag;
  if (full_with_rag == 0) o.fail("full variant has no retrieved text to remove");
  if (a1.audits.size() != 20 || a2_checked != 20 || rag_checked != 20) o.fail("missing audits");
  if (o.ok)
    o.detail = "A1: " + std::to_string(sentences) + " sentences absent; A2: " + std::to_string(a2_checked) +
               " prompts without detector output; no_rag: " + std::to_string(rag_checked) + " prompts without retrieved text";
  return o;
}

Outcome cold_start() {
  Outcome o;
  auto& fx = bench_fixture();
  ProviderConfig pc;
  auto gateway = std::make_shared<LlmGateway>(pc, std::make_shared<ScriptedModel>(fx.corpus.script, 1024));
  const auto history = fx.corpus.history_kb(gateway);
  SweepConfig sc;
  sc.kind = SweepKind::ColdStart;
  sc.fractions = {0.0, 0.1, 0.5, 1.0};
  sc.seeds = {0, 1, 2};
  const auto points = sweep(sc, fx.corpus.bundles, history, *gateway, BenchConfig{});
  const std::map<double, std::size_t> want = {{0.0, 0}, {0.1, 2}, {0.5, 10}, {1.0, 20}};
  std::map<std::uint64_t, std::vector<const SweepPoint*>> by_seed;
  for (const auto& p : points) {
    if (p.kb_size != want.at(p.fraction))
      o.fail("p=" + fmt(p.fraction) + " gave " + std::to_string(p.kb_size) + " records");
    if (p.fraction == 0.0)
      for (const auto& a : p.audits)
        if (!a.retrieved.empty()) o.fail("p=0 retrieved cases for " + a.ticket_id);
    by_seed[p.seed].push_back(&p);
  }
  std::string volumes;
  for (auto& [seed, pts] : by_seed) {
    std::sort(pts.begin(), pts.end(), [](auto* a, auto* b) { return a->fraction < b->fraction; });
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (pts[i]->retrieved_total < pts[i - 1]->retrieved_total) o.fail("volume drops at seed " + std::to_string(seed));
    if (seed == 0)
      for (auto* p : pts) volumes += (volumes.empty() ? "" : ",") + std::to_string(p->retrieved_total);
  }
  if (o.ok) o.detail = "KB sizes {0,2,10,20} for 3 seeds; retrieved cases per run (seed 0) {" + volumes + "}";
  return o;
}

Outcome feedback_loop() {
  Outcome o;
  auto& fx = bench_fixture();
  const auto& full = variant_of(fx.first, "full");
  const auto dir = scratch_dir("feedback");
  AuditStore audits((dir / "audits").string());
  FeedbackStore feedback((dir / "feedback.jsonl").string());
  for (const auto& a : full.audits) audits.put(a);

  std::map<std::string, Label> labels;
  for (std::size_t i = 0; i < full.audits.size(); i += 2) {
    FeedbackRecord rec;
    rec.report_id = full.audits[i].report_id;
    rec.label = i % 4 == 0 ? Label::Good : Label::Bad;
    rec.notes = "reviewed";
    rec.judge = "acceptance";
    rec.created_at = 1'700'000'000 + static_cast<EpochSeconds>(i);
    record_feedback(rec, feedback, audits);
    labels[rec.report_id] = rec.label;
  }
  // Store round trip: a reopened store reports the same active labels.
  FeedbackStore reopened((dir / "feedback.jsonl").string());
  for (const auto& [id, label] : labels) {
    const auto a = reopened.active(id);
    if (!a || a->label != label) o.fail("label for " + id + " lost on reopen");
  }

  AlignmentExportConfig kto{ExportFormat::KtoBinary, (dir / "kto.jsonl").string(), false};
  const auto ks = export_alignment_datasets(audits, reopened, kto);
  std::ifstream kin(kto.output_path);
  std::size_t kto_lines = 0;
  for (std::string line; std::getline(kin, line);) {
    if (line.empty()) continue;
    ++kto_lines;
    const auto parsed = parse_kto_line(line);
    const auto audit = audits.get(parsed.report_id);
    if (!audit || !labels.count(parsed.report_id)) {
      o.fail("KTO line for unlabeled report " + parsed.report_id);
      continue;
    }
    if (!(parsed == kto_example(*audit, labels.at(parsed.report_id)))) o.fail("KTO parse-back differs for " + parsed.report_id);
  }
  if (kto_lines != labels.size() || ks.lines != labels.size()) o.fail("KTO line count " + std::to_string(kto_lines));

  AlignmentExportConfig grpo{ExportFormat::GrpoGroups, (dir / "grpo.jsonl").string(), true};
  export_alignment_datasets(audits, reopened, grpo);
  std::ifstream gin(grpo.output_path);
  std::size_t groups = 0;
  for (std::string line; std::getline(gin, line);) {
    if (line.empty()) continue;
    ++groups;
    const auto g = parse_grpo_line(line);
    const auto audit = audits.get(g.report_id);
    if (!audit || g.rewards.size() != audit->attempts.size() || g.completions.size() != audit->attempts.size()) {
      o.fail("GRPO group shape for " + g.report_id);
      continue;
    }
    for (std::size_t i = 0; i < g.rewards.size(); ++i)
      if (g.rewards[i] != audit->attempts[i].aggregate) o.fail("GRPO reward differs for " + g.report_id);
  }
  if (groups != full.audits.size()) o.fail("GRPO group count " + std::to_string(groups));

  // Gate admission followed by a human Bad label.
  auto embedder = std::make_shared<HashingEmbedder>(1024);
  KnowledgeBase kb(embedder);
  std::size_t gated = 0, revoked = 0;
  for (const auto& a : full.audits) {
    if (!a.passed || !a.report.ecd_verdict) continue;
    const auto admit = apply_case_update(a, std::nullopt, kb, 1);
    if (!admit.added || !kb.contains(a.report_id)) {
      o.fail("gate did not admit " + a.report_id);
      continue;
    }
    ++gated;
    FeedbackRecord bad{"", a.report_id, Label::Bad, std::nullopt, std::nullopt, "acceptance", 2};
    record_feedback(bad, feedback, audits);
    const auto after = apply_case_update(a, feedback.active(a.report_id), kb, 2);
    if (!after.revoked || kb.contains(a.report_id)) o.fail("Bad label did not revoke " + a.report_id);
    ++revoked;
  }
  if (gated == 0) o.fail("no gate-admitted report to revoke");
  fs::remove_all(dir);
  if (o.ok)
    o.detail = std::to_string(kto_lines) + " KTO lines parsed back equal, " + std::to_string(groups) +
               " GRPO groups with exact rewards, " + std::to_string(revoked) + "/" + std::to_string(gated) +
               " gate admissions revoked by Bad";
  return o;
}

Outcome metrics_oracle() {
  Outcome o;
  DeterministicRng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto run = oracle::random_run(rng, 30);
    const auto got = compute_metrics(run.reports, run.truths);
    const auto want = oracle::metrics_oracle(run.reports, run.truths);
    if (!oracle::metrics_agree(got, want)) o.fail("run " + std::to_string(i) + " disagrees");
    if (got.avg_at_5 > got.top5 + 1e-12) o.fail("AVG@5 above Top5 in run " + std::to_string(i));
  }
  std::vector<AnalysisReport> reports;
  std::vector<LabeledTruth> truths;
  for (int i = 0; i < 6; ++i) {
    const auto id = "E" + std::to_string(i);
    truths.push_back({id, GroundTruth{true, FaultClass{FaultKind::CodeDefect, ""}, "bad commit", std::nullopt}});
    AnalysisReport r;
    r.ticket_id = id;
    r.ecd_verdict = true;
    reports.push_back(r);
  }
  const auto empty = compute_metrics(reports, truths);
  if (empty.top1 != 0.0 || empty.top3 != 0.0 || empty.top5 != 0.0 || empty.avg_at_5 != 0.0)
    o.fail("empty rankings gave nonzero Top-k");
  if (o.ok) o.detail = "50 randomized runs match the oracle; empty rankings give Top-k = 0";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"drain_oracle", drain_oracle},
      {"pattern_oracle", pattern_oracle},
      {"normalization", normalization},
      {"cotscore_properties", cotscore_properties},
      {"retrieval_exactness", retrieval_exactness},
      {"end_to_end_determinism", end_to_end_determinism},
      {"ablation_structure", ablation_structure},
      {"cold_start_sweep", cold_start},
      {"feedback_loop", feedback_loop},
      {"metrics_oracle", metrics_oracle},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out.ok = false;
      out.detail = std::string("exception: ") + e.what();
    }
    if (!out.ok) ++failed;
    std::cout << (out.ok ? "PASS " : "FAIL ") << name << ": " << out.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
