#include "changelens/cli.hpp"

#include <algorithm>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "changelens/config.hpp"
#include "changelens/cotscore.hpp"
#include "changelens/error.hpp"
#include "changelens/evalharness.hpp"
#include "changelens/feedback.hpp"
#include "changelens/inference.hpp"
#include "changelens/knowledge_base.hpp"
#include "changelens/llm_gateway.hpp"
#include "changelens/serialization.hpp"
#include "changelens/service.hpp"
#include "changelens/text.hpp"
#include "changelens/validation.hpp"

namespace changelens {

namespace fs = std::filesystem;

namespace {

EpochSeconds now_seconds() { return static_cast<EpochSeconds>(std::time(nullptr)); }

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path, path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!is_blank(cur)) out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::UsageError, what + " is not a number: " + s, s);
  }
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::UsageError, what + " is not a nonnegative integer: " + s, s);
  }
}

// Shared embedder for KB commands without a config file.
std::shared_ptr<const Embedder> embedder_for(const std::string& config_path, std::size_t dim,
                                             std::shared_ptr<LlmGateway>* gateway_out = nullptr) {
  if (!config_path.empty()) {
    auto gw = std::make_shared<LlmGateway>(load_config(config_path).provider);
    if (gateway_out) *gateway_out = gw;
    return gw;
  }
  return std::make_shared<HashingEmbedder>(dim);
}

std::size_t corpus_dimension(const GeneratedCorpus& corpus) {
  if (!corpus.history.empty() && corpus.history.front().embedding.dimension() > 0)
    return corpus.history.front().embedding.dimension();
  return 1024;
}

std::shared_ptr<LlmGateway> bench_gateway(const GeneratedCorpus& corpus, const std::string& backend,
                                          const std::string& config_path, int parallel) {
  const auto dim = corpus_dimension(corpus);
  ProviderConfig pc;
  pc.embedding_dim = dim;
  pc.max_inflight = std::max(1, parallel);
  pc.max_retries = 0;
  if (backend == "scripted") {
    if (corpus.script.empty())
      throw Error(ErrorCode::InvalidArgument, "corpus has no script; use --backend replay or config");
    return std::make_shared<LlmGateway>(pc, std::make_shared<ScriptedModel>(corpus.script, dim));
  }
  if (backend == "replay") {
    pc.transcript_path = "(corpus transcript)";
    return std::make_shared<LlmGateway>(pc, std::make_shared<MockBackend>(corpus.transcript, dim, true));
  }
  if (backend == "config") {
    if (config_path.empty()) throw Error(ErrorCode::UsageError, "--backend config requires --config");
    return std::make_shared<LlmGateway>(load_config(config_path).provider);
  }
  throw Error(ErrorCode::UsageError, "--backend must be scripted, replay or config", backend);
}

BenchConfig bench_config(const std::string& config_path, int parallel, bool lenient, const std::string& avg) {
  BenchConfig b;
  if (!config_path.empty()) b.inference = load_config(config_path).inference;
  b.max_parallel = std::max(1, parallel);
  b.metrics.lenient_match = lenient;
  if (avg == "hitrate") {
    b.metrics.avg_mode = AvgMode::HitRate;
  } else if (avg != "reciprocal") {
    throw Error(ErrorCode::UsageError, "--avg must be reciprocal or hitrate", avg);
  }
  return b;
}

void print_json(std::ostream& out, const Json& j) { out << j.dump(2) << "\n"; }

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Change analysis engine: evidence to domain text, LLM analysis, CoTScore gating, feedback."};
  app.name("changelens");
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate case bundles and store them");
  std::vector<std::string> ingest_cases;
  std::string ingest_config, ingest_dir;
  ingest->add_option("--case", ingest_cases, "Case bundle files")->required();
  ingest->add_option("--config", ingest_config, "Config file; bundles go to its cases_dir");
  ingest->add_option("--out-dir", ingest_dir, "Directory for validated bundles");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Analyze one case and write its report");
  std::string an_case, an_config, an_out, an_variant;
  bool an_no_update = false;
  analyze->add_option("--case", an_case, "Case bundle file")->required();
  analyze->add_option("--config", an_config, "Config file")->required();
  analyze->add_option("--out", an_out, "Report output path");
  analyze->add_option("--variant", an_variant, "Ablation variant");
  analyze->add_flag("--no-kb-update", an_no_update, "Do not apply the gate decision to the knowledge base");

  // bench
  auto* bench = app.add_subcommand("bench", "Synthetic corpora, benchmark runs and sweeps");
  bench->require_subcommand(1);
  auto* gen = bench->add_subcommand("generate", "Generate a synthetic corpus and its transcript");
  std::uint64_t g_seed = 42;
  std::size_t g_cases = 20, g_history = 20, g_dim = 1024;
  double g_err = 0.5;
  std::string g_mix, g_out;
  gen->add_option("--seed", g_seed, "Corpus seed");
  gen->add_option("--cases", g_cases, "Number of cases");
  gen->add_option("--history", g_history, "Number of historical cases");
  gen->add_option("--erroneous-fraction", g_err, "Fraction of erroneous cases");
  gen->add_option("--mix", g_mix, "Fault mix as Kind=weight,...");
  gen->add_option("--dim", g_dim, "Embedding dimension");
  gen->add_option("--out", g_out, "Corpus output path")->required();

  auto* brun = bench->add_subcommand("run", "Benchmark variants on a corpus");
  std::string r_corpus, r_variants, r_out, r_table, r_backend = "scripted", r_config, r_avg = "reciprocal";
  int r_parallel = 4;
  bool r_lenient = false;
  brun->add_option("--corpus", r_corpus, "Corpus file")->required();
  brun->add_option("--variant", r_variants, "Comma-separated variants (default: all)");
  brun->add_option("--out", r_out, "Metrics JSON output");
  brun->add_option("--table", r_table, "Text table output");
  brun->add_option("--backend", r_backend, "scripted, replay or config");
  brun->add_option("--config", r_config, "Config file for inference settings and the config backend");
  brun->add_option("--parallel", r_parallel, "Concurrent cases");
  brun->add_flag("--lenient", r_lenient, "Substring root-cause matching");
  brun->add_option("--avg", r_avg, "AVG@5 mode: reciprocal or hitrate");

  auto* bsweep = bench->add_subcommand("sweep", "Cold-start or feedback-ratio sweep");
  std::string s_corpus, s_kind = "coldstart", s_fractions = "0,0.1,0.5,1", s_seeds = "0", s_variant = "full", s_out,
                        s_plot, s_backend = "scripted", s_config;
  int s_parallel = 4;
  bsweep->add_option("--corpus", s_corpus, "Corpus file")->required();
  bsweep->add_option("--kind", s_kind, "coldstart or feedback");
  bsweep->add_option("--fractions", s_fractions, "Comma-separated fractions in [0,1]");
  bsweep->add_option("--seeds", s_seeds, "Comma-separated seeds");
  bsweep->add_option("--variant", s_variant, "Variant to run at each point");
  bsweep->add_option("--out", s_out, "Sweep JSON output");
  bsweep->add_option("--plot", s_plot, "CSV plot data output");
  bsweep->add_option("--backend", s_backend, "scripted, replay or config");
  bsweep->add_option("--config", s_config, "Config file");
  bsweep->add_option("--parallel", s_parallel, "Concurrent cases");

  // kb
  auto* kb = app.add_subcommand("kb", "Knowledge base maintenance");
  kb->require_subcommand(1);
  std::string kb_config, kb_path;
  std::size_t kb_dim = 1024;
  kb->add_option("--config", kb_config, "Config file (embedder and kb_path)");
  kb->add_option("--kb", kb_path, "Knowledge base log path");
  kb->add_option("--dim", kb_dim, "Hashing embedder dimension when no config is given");
  auto* kb_stats = kb->add_subcommand("stats", "Record counts");
  auto* kb_export = kb->add_subcommand("export", "Write active records as a JSON list");
  std::string kb_export_out;
  kb_export->add_option("--out", kb_export_out, "Output path")->required();
  auto* kb_sample = kb->add_subcommand("sample", "Write a sampled copy of the knowledge base");
  double kb_fraction = 1.0;
  std::uint64_t kb_seed = 0;
  std::string kb_sample_out;
  kb_sample->add_option("--fraction", kb_fraction, "Fraction in [0,1]")->required();
  kb_sample->add_option("--seed", kb_seed, "Sampling seed");
  kb_sample->add_option("--out", kb_sample_out, "Output log path")->required();
  auto* kb_seed_cmd = kb->add_subcommand("seed", "Add a corpus's historical cases");
  std::string kb_corpus;
  kb_seed_cmd->add_option("--corpus", kb_corpus, "Corpus file")->required();
  auto* kb_rebuild = kb->add_subcommand("rebuild", "Re-embed every record with the current embedder");
  auto* kb_revoke = kb->add_subcommand("revoke", "Tombstone a record");
  std::string kb_revoke_id, kb_revoke_reason = "manual revoke";
  kb_revoke->add_option("--case", kb_revoke_id, "Case id")->required();
  kb_revoke->add_option("--reason", kb_revoke_reason, "Reason");

  // cotscore
  auto* cot = app.add_subcommand("cotscore", "Score a reasoning text against a reference");
  std::string c_cand, c_ref, c_method = "greedy_token_f1";
  double c_threshold = 0.6;
  std::size_t c_dim = 1024;
  cot->add_option("--candidate", c_cand, "Candidate reasoning file")->required();
  cot->add_option("--reference", c_ref, "Reference reasoning file")->required();
  cot->add_option("--method", c_method, "greedy_token_f1 or sentence_cosine");
  cot->add_option("--threshold", c_threshold, "Gate threshold");
  cot->add_option("--dim", c_dim, "Hashing embedder dimension");

  // feedback
  auto* fb = app.add_subcommand("feedback", "Human labels and alignment exports");
  fb->require_subcommand(1);
  std::string fb_config;
  fb->add_option("--config", fb_config, "Config file")->required();
  auto* fb_label = fb->add_subcommand("label", "Label a report Good or Bad");
  std::string fb_report, fb_note, fb_judge = "cli", fb_corrected;
  bool fb_good = false, fb_bad = false;
  fb_label->add_option("--report", fb_report, "Report id")->required();
  auto* good_flag = fb_label->add_flag("--good", fb_good, "Label Good");
  auto* bad_flag = fb_label->add_flag("--bad", fb_bad, "Label Bad");
  good_flag->excludes(bad_flag);
  fb_label->add_option("--note", fb_note, "Reviewer note");
  fb_label->add_option("--judge", fb_judge, "Reviewer name");
  fb_label->add_option("--corrected", fb_corrected, "Corrected ground truth JSON file");
  auto* fb_export = fb->add_subcommand("export", "Export KTO or GRPO datasets");
  std::string fb_format, fb_out;
  bool fb_unlabeled = false;
  fb_export->add_option("--format", fb_format, "kto or grpo")->required();
  fb_export->add_option("--out", fb_out, "Output JSONL path")->required();
  fb_export->add_flag("--include-unlabeled", fb_unlabeled, "GRPO: include unlabeled groups");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::string sv_config, sv_listen;
  serve->add_option("--config", sv_config, "Config file")->required();
  serve->add_option("--listen", sv_listen, "host:port override");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (ingest->parsed()) {
      std::vector<CaseBundle> bundles;
      std::string violations;
      for (const auto& path : ingest_cases) {
        auto b = load_bundle(path);
        const auto v = validate_bundle(b);
        if (!v.ok()) violations += path + ":\n" + v.to_string() + "\n";
        bundles.push_back(std::move(b));
      }
      const auto corpus_check = validate_corpus(bundles);
      if (violations.empty() && !corpus_check.ok()) violations = corpus_check.to_string();
      if (!violations.empty()) throw Error(ErrorCode::InvalidBundle, "one or more bundles failed validation", violations);
      std::string dir = ingest_dir;
      if (dir.empty() && !ingest_config.empty()) dir = load_config(ingest_config).cases_dir;
      Json ids = Json::array();
      for (const auto& b : bundles) {
        if (!dir.empty()) save_bundle((fs::path(dir) / (b.ticket.ticket_id + ".json")).string(), b);
        ids.push_back(b.ticket.ticket_id);
      }
      print_json(out, {{"ingested", ids}, {"stored_to", dir.empty() ? Json(nullptr) : Json(dir)}});
      return kExitOk;
    }

    if (analyze->parsed()) {
      const auto cfg = load_config(an_config);
      const auto bundle = load_bundle(an_case);
      if (const auto v = validate_bundle(bundle); !v.ok())
        throw Error(ErrorCode::InvalidBundle, "case bundle failed validation", v.to_string());
      auto gateway = std::make_shared<LlmGateway>(cfg.provider);
      auto base = KnowledgeBase::open(cfg.kb_path, gateway);
      const auto icfg = an_variant.empty() ? cfg.inference : variant_config(cfg.inference, an_variant);
      const auto run = run_case(bundle, &base, *gateway, icfg, an_variant);
      AuditStore audits(cfg.audit_dir);
      audits.put(run.audit);
      const auto path =
          an_out.empty() ? (fs::path(cfg.reports_dir) / (run.audit.report_id + ".json")).string() : an_out;
      write_json_file(path, Json(run.report));
      Json summary{{"report_id", run.audit.report_id},
                   {"report_path", path},
                   {"ecd_verdict", run.report.ecd_verdict},
                   {"passed", run.audit.passed},
                   {"flagged_for_review", run.audit.flagged_for_review}};
      if (!an_no_update) {
        FeedbackStore feedback(cfg.feedback_path);
        const auto u = apply_case_update(run.audit, feedback.active(run.audit.report_id), base, now_seconds());
        summary["kb_admitted"] = u.added;
        summary["kb_reason"] = u.decision.reason;
      }
      print_json(out, summary);
      return kExitOk;
    }

    if (gen->parsed()) {
      CorpusSpec spec;
      spec.seed = g_seed;
      spec.n_cases = g_cases;
      spec.n_history = g_history;
      spec.erroneous_fraction = g_err;
      for (const auto& item : split_list(g_mix)) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::UsageError, "--mix entries must be Kind=weight", item);
        const auto kind = parse_fault_kind(trim(item.substr(0, eq)));
        if (!kind) throw Error(ErrorCode::UsageError, "unknown fault kind in --mix", item);
        spec.fault_mix[*kind] = parse_double(item.substr(eq + 1), "--mix weight");
      }
      const auto corpus = generate_corpus(spec, g_dim);
      save_corpus(corpus, g_out);
      print_json(out, {{"corpus", g_out},
                       {"cases", corpus.bundles.size()},
                       {"history", corpus.history.size()},
                       {"transcript_entries", corpus.transcript.size()}});
      return kExitOk;
    }

    if (brun->parsed()) {
      const auto corpus = load_corpus(r_corpus);
      std::vector<std::string> variants = split_list(r_variants);
      if (variants.empty()) variants.assign(std::begin(kStandardVariants), std::end(kStandardVariants));
      const auto gateway = bench_gateway(corpus, r_backend, r_config, r_parallel);
      const auto cfg = bench_config(r_config, r_parallel, r_lenient, r_avg);
      const auto kb_hist = corpus.history_kb(gateway);
      const auto results = run_benchmark(corpus.bundles, &kb_hist, *gateway, cfg, variants);
      Json doc{{"corpus", r_corpus}, {"backend", r_backend}, {"variants", Json::object()}};
      std::vector<std::pair<std::string, MetricsTable>> rows;
      for (const auto& r : results) {
        doc["variants"][r.variant] = r;
        rows.emplace_back(r.variant, r.metrics);
      }
      const auto table = render_metrics_table(rows);
      if (!r_out.empty()) write_json_file(r_out, doc);
      if (!r_table.empty()) write_text_file_atomic(r_table, table);
      out << table;
      return kExitOk;
    }

    if (bsweep->parsed()) {
      const auto corpus = load_corpus(s_corpus);
      const auto kind = parse_sweep_kind(s_kind);
      if (!kind) throw Error(ErrorCode::UsageError, "--kind must be coldstart or feedback", s_kind);
      SweepConfig sc;
      sc.kind = *kind;
      sc.variant = s_variant;
      sc.now = now_seconds();
      for (const auto& f : split_list(s_fractions)) sc.fractions.push_back(parse_double(f, "fraction"));
      sc.seeds.clear();
      for (const auto& s : split_list(s_seeds)) sc.seeds.push_back(parse_u64(s, "seed"));
      const auto gateway = bench_gateway(corpus, s_backend, s_config, s_parallel);
      const auto cfg = bench_config(s_config, s_parallel, false, "reciprocal");
      const auto history = corpus.history_kb(gateway);
      const auto points = sweep(sc, corpus.bundles, history, *gateway, cfg);
      Json doc{{"kind", to_string(sc.kind)}, {"variant", sc.variant}, {"points", Json::array()}};
      for (const auto& p : points) doc["points"].push_back(p);
      if (!s_out.empty()) write_json_file(s_out, doc);
      const auto plot = sweep_plot_data(points);
      if (!s_plot.empty()) write_text_file_atomic(s_plot, plot);
      out << plot;
      return kExitOk;
    }

    if (kb->parsed()) {
      std::string path = kb_path;
      if (path.empty() && !kb_config.empty()) path = load_config(kb_config).kb_path;
      if (path.empty()) throw Error(ErrorCode::UsageError, "kb commands need --kb or --config");
      auto embedder = embedder_for(kb_config, kb_dim);
      if (kb_rebuild->parsed()) {
        const auto rebuilt = KnowledgeBase::rebuild(path, embedder);
        print_json(out, {{"kb", path}, {"rebuilt", rebuilt.size()}, {"dimension", embedder->dimension()}});
        return kExitOk;
      }
      auto base = KnowledgeBase::open(path, embedder);
      if (kb_stats->parsed()) {
        print_json(out, Json(base.stats()));
      } else if (kb_export->parsed()) {
        write_json_file(kb_export_out, Json(base.records()));
        print_json(out, {{"exported", base.size()}, {"out", kb_export_out}});
      } else if (kb_sample->parsed()) {
        const auto sample = base.sample_fraction(kb_fraction, kb_seed);
        sample.save(kb_sample_out);
        print_json(out, {{"sampled", sample.size()}, {"of", base.size()}, {"out", kb_sample_out}});
      } else if (kb_seed_cmd->parsed()) {
        const auto corpus = load_corpus(kb_corpus);
        std::size_t added = 0;
        for (const auto& r : corpus.history) {
          if (base.contains(r.case_id)) continue;
          auto rec = r;
          if (rec.embedding.dimension() != embedder->dimension()) rec.embedding = {};
          base.add_case(std::move(rec));
          ++added;
        }
        print_json(out, {{"added", added}, {"active", base.size()}});
      } else if (kb_revoke->parsed()) {
        if (!base.revoke(kb_revoke_id, kb_revoke_reason))
          throw Error(ErrorCode::UnknownReport, "no active record " + kb_revoke_id, kb_revoke_id);
        print_json(out, {{"revoked", kb_revoke_id}});
      }
      return kExitOk;
    }

    if (cot->parsed()) {
      const auto method = parse_similarity_method(c_method);
      if (!method) throw Error(ErrorCode::UsageError, "--method must be greedy_token_f1 or sentence_cosine", c_method);
      CoTConfig cc;
      cc.method = *method;
      cc.threshold = c_threshold;
      cc.validate();
      const HashingEmbedder embedder(c_dim);
      const auto result = score_cot(segment_cot(read_text(c_cand)), segment_cot(read_text(c_ref)), cc, embedder);
      print_json(out, Json(result));
      return kExitOk;
    }

    if (fb->parsed()) {
      const auto cfg = load_config(fb_config);
      AuditStore audits(cfg.audit_dir);
      FeedbackStore feedback(cfg.feedback_path);
      if (fb_label->parsed()) {
        if (!fb_good && !fb_bad) throw Error(ErrorCode::UsageError, "one of --good or --bad is required");
        FeedbackRecord rec;
        rec.report_id = fb_report;
        rec.label = fb_good ? Label::Good : Label::Bad;
        if (!fb_note.empty()) rec.notes = fb_note;
        if (!fb_corrected.empty()) rec.corrected_truth = read_json_file(fb_corrected).get<GroundTruth>();
        rec.judge = fb_judge;
        rec.created_at = now_seconds();
        const auto id = record_feedback(rec, feedback, audits);
        auto gateway = std::make_shared<LlmGateway>(cfg.provider);
        auto base = KnowledgeBase::open(cfg.kb_path, gateway);
        const auto audit = audits.get(fb_report);
        const auto u = apply_case_update(*audit, feedback.active(fb_report), base, rec.created_at);
        Json result{{"feedback_id", id},         {"report_id", fb_report},
                    {"label", to_string(rec.label)}, {"admitted", base.contains(fb_report)},
                    {"revoked", u.revoked},      {"reason", u.decision.reason}};
        if (rec.label == Label::Bad && rec.corrected_truth)
          result["corrected_report_id"] =
              admit_correction(*audit, *rec.corrected_truth, fb_judge, rec.created_at, audits, feedback, base);
        print_json(out, result);
      } else if (fb_export->parsed()) {
        AlignmentExportConfig ec;
        if (fb_format == "kto") {
          ec.format = ExportFormat::KtoBinary;
        } else if (fb_format == "grpo") {
          ec.format = ExportFormat::GrpoGroups;
        } else {
          throw Error(ErrorCode::UsageError, "--format must be kto or grpo", fb_format);
        }
        ec.output_path = fb_out;
        ec.include_unlabeled = fb_unlabeled;
        print_json(out, Json(export_alignment_datasets(audits, feedback, ec)));
      }
      return kExitOk;
    }

    if (serve->parsed()) {
      auto cfg = load_config(sv_config);
      if (!sv_listen.empty()) cfg.listen_address = sv_listen;
      cfg.validate();
      AnalysisService service(cfg);
      const auto [host, port] = cfg.host_port();
      const int bound = service.bind(host, port);
      out << "listening on " << host << ":" << bound << std::endl;
      service.listen();
      return kExitOk;
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::UsageError) {
      err << "error: " << e.what() << "\n\n" << app.help();
      return kExitUsage;
    }
    err << error_body(error_code_name(e.code()), e.what(), e.detail()).dump() << "\n";
    return kExitDomainError;
  } catch (const std::exception& e) {
    err << error_body("Internal", e.what()).dump() << "\n";
    return kExitDomainError;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace changelens
