#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dialign/dialign.hpp"

namespace fs = std::filesystem;
using namespace dialign;

namespace {

struct Globals {
  std::string root;
  unsigned workers = 0;

  fs::path path(const std::string& p) const { return detail::resolve(root, p); }
};

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

ManifestLoadResult load(const Globals& g, const std::string& manifest, bool strict, bool probe = true) {
  auto res = load_manifest(g.path(manifest), {strict, probe});
  print_warnings(res.warnings);
  return res;
}

void add_corpus_commands(CLI::App& parent, Globals& g) {
  auto* validate = parent.add_subcommand("validate", "Check a manifest and its audio files");
  auto* stats = parent.add_subcommand("stats", "Print corpus statistics");
  auto v_manifest = std::make_shared<std::string>();
  auto v_strict = std::make_shared<bool>(false);
  validate->add_option("manifest", *v_manifest, "Manifest (JSONL)")->required();
  validate->add_flag("--strict", *v_strict, "Treat missing audio as an error");
  validate->callback([&g, v_manifest, v_strict] {
    const auto res = load(g, *v_manifest, *v_strict);
    std::cout << "ok: " << res.manifest.sites().size() << " sites, " << res.manifest.utterances().size()
              << " utterances, " << res.warnings.size() << " warnings\n";
  });
  auto s_manifest = std::make_shared<std::string>();
  stats->add_option("manifest", *s_manifest, "Manifest (JSONL)")->required();
  stats->callback([&g, s_manifest] { std::cout << format_stats(corpus_stats(load(g, *s_manifest, false).manifest)); });
}

std::map<UtteranceKey, EmbeddingSequence> read_dir_for(const fs::path& dir, const Manifest& m,
                                                       std::vector<std::string>& missing) {
  std::map<UtteranceKey, EmbeddingSequence> out;
  for (const Utterance& u : m.utterances()) {
    const UtteranceKey key{u.site_id, u.sentence_id};
    const fs::path file = dir / sqe_file_name(key);
    if (!fs::is_regular_file(file)) {
      missing.push_back(file.string());
      continue;
    }
    out.emplace(key, read_sqe(file));
  }
  return out;
}

void write_scores_csv(const fs::path& path, const std::vector<std::string>& rows, const std::vector<std::string>& cols,
                      const ScoreMatrix& scores) {
  std::ofstream out(path);
  if (!out) throw runtime_error("cannot write " + path.string());
  out << "query";
  for (const auto& c : cols) out << ',' << c;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << rows[i];
    for (std::size_t j = 0; j < cols.size(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.9g", scores.at(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

int run_cli(int argc, char** argv) {
  Globals g;
  CLI::App app{"Cross-dialect speech retrieval and CER evaluation"};
  app.set_version_flag("--version", std::string(kToolkitVersion));
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--root", g.root, "Resolve relative paths against this directory");
  app.add_option("--workers", g.workers, "Worker threads (0 = all cores)");

  add_corpus_commands(app, g);
  auto* corpus = app.add_subcommand("corpus", "Manifest commands")->require_subcommand(1);
  add_corpus_commands(*corpus, g);

  // features extract
  auto* features = app.add_subcommand("features", "Acoustic features")->require_subcommand(1);
  auto* extract = features->add_subcommand("extract", "Compute log-mel features for every utterance");
  std::string fx_manifest, fx_out;
  bool fx_strict = false;
  FbankOptions fx_opts;
  extract->add_option("manifest", fx_manifest)->required();
  extract->add_option("--out", fx_out, "Output directory")->required();
  extract->add_option("--bins", fx_opts.num_bins, "Mel bins")->capture_default_str();
  extract->add_flag("--strict", fx_strict, "Fail on missing audio or sample-rate mismatch");
  extract->callback([&] {
    const auto res = load(g, fx_manifest, fx_strict);
    const FbankComputer fbank(fx_opts);
    const fs::path out = g.path(fx_out);
    fs::create_directories(out);
    const auto& utts = res.manifest.utterances();
    std::vector<std::string> problems(utts.size());
    parallel_for(utts.size(), g.workers, [&](std::size_t i) {
      const fs::path audio = res.manifest.audio_file(utts[i]);
      if (!fs::is_regular_file(audio)) {
        problems[i] = "missing audio " + audio.string();
        return;
      }
      const auto f = fbank.compute(decode_wav(audio, {fx_strict, fx_opts.sample_rate_hz}));
      write_sqe(out / sqe_file_name({utts[i].site_id, utts[i].sentence_id}), features_to_sequence(f));
    });
    std::size_t written = 0;
    for (const auto& p : problems) {
      if (p.empty()) ++written;
      else std::cerr << "warning: " << p << '\n';
    }
    std::cout << "wrote " << written << " feature files to " << out.string() << " (" << fx_opts.id() << ")\n";
  });

  // embed baseline | import
  auto* embed = app.add_subcommand("embed", "Utterance embeddings")->require_subcommand(1);
  auto* baseline = embed->add_subcommand("baseline", "Encode feature files with the fixed random projection");
  std::string eb_manifest, eb_features, eb_out;
  BaselineEncoderOptions eb_opts;
  baseline->add_option("manifest", eb_manifest)->required();
  baseline->add_option("--features", eb_features, "Feature directory")->required();
  baseline->add_option("--out", eb_out, "Output directory")->required();
  baseline->add_option("--dim", eb_opts.out_dim)->capture_default_str();
  baseline->add_option("--seed", eb_opts.seed)->capture_default_str();
  baseline->add_option("--stack", eb_opts.stack)->capture_default_str();
  baseline->add_option("--stride", eb_opts.stride)->capture_default_str();
  baseline->callback([&] {
    const auto res = load(g, eb_manifest, false, false);
    std::vector<std::string> missing;
    const auto feats = read_dir_for(g.path(eb_features), res.manifest, missing);
    for (const auto& f : missing) std::cerr << "warning: missing features " << f << '\n';
    if (feats.empty()) throw validation_error("no feature files found in " + g.path(eb_features).string());
    const std::size_t bins = feats.begin()->second.dim;
    const BaselineEncoder encoder(bins, eb_opts);
    const fs::path out = g.path(eb_out);
    fs::create_directories(out);
    std::vector<const std::pair<const UtteranceKey, EmbeddingSequence>*> items;
    for (const auto& kv : feats) {
      if (kv.second.dim != bins) throw validation_error("feature dimension mismatch for " + sqe_file_name(kv.first));
      items.push_back(&kv);
    }
    parallel_for(items.size(), g.workers, [&](std::size_t i) {
      if (items[i]->second.num_frames == 0) return;
      write_sqe(out / sqe_file_name(items[i]->first), encoder.encode(sequence_to_features(items[i]->second)));
    });
    std::cout << "wrote " << items.size() << " embeddings (" << encoder.id() << ")\n";
  });

  auto* import = embed->add_subcommand("import", "Check and summarize precomputed embeddings");
  std::string ei_dir, ei_manifest, ei_out;
  bool ei_normalize = false;
  import->add_option("--dir", ei_dir, "Directory of <site>__<sentence>.sqe files")->required();
  import->add_option("--manifest", ei_manifest, "Only import utterances listed in this manifest");
  import->add_option("--out", ei_out, "Re-export the imported store here");
  import->add_flag("--normalize", ei_normalize, "L2-normalize frames before export");
  import->callback([&] {
    EmbeddingStore store;
    if (!ei_manifest.empty()) {
      const auto res = load(g, ei_manifest, false, false);
      auto imp = import_embeddings(g.path(ei_dir), res.manifest);
      print_warnings(imp.warnings);
      store = std::move(imp.store);
    } else {
      store = import_directory(g.path(ei_dir));
    }
    std::size_t zero_rows = 0;
    if (ei_normalize) store = store.normalized(&zero_rows);
    std::cout << "imported " << store.size() << " sequences, dim " << store.dim();
    if (ei_normalize) std::cout << ", " << zero_rows << " zero-norm frames";
    std::cout << '\n';
    if (!ei_out.empty()) export_store(store, g.path(ei_out));
  });

  // seqsim pair | matrix
  auto* seqsim = app.add_subcommand("seqsim", "Sequence similarity")->require_subcommand(1);
  bool ss_no_normalize = false;
  auto* pair = seqsim->add_subcommand("pair", "Score two embedding files");
  std::string sp_a, sp_b;
  pair->add_option("first", sp_a)->required();
  pair->add_option("second", sp_b)->required();
  pair->add_flag("--no-normalize", ss_no_normalize, "Use raw dot products");
  pair->callback([&] {
    auto a = read_sqe(g.path(sp_a));
    auto b = read_sqe(g.path(sp_b));
    if (!ss_no_normalize) {
      a = l2_normalize(a);
      b = l2_normalize(b);
    }
    const auto s = seqsim_fast(a, b);
    std::printf("Re %.6f\nPr %.6f\nF1 %.6f\n", s.recall, s.precision, s.f1);
  });

  auto* matrix = seqsim->add_subcommand("matrix", "Score every query against every target");
  std::string sm_queries, sm_targets, sm_out;
  matrix->add_option("--queries", sm_queries)->required();
  matrix->add_option("--targets", sm_targets)->required();
  matrix->add_option("--out", sm_out, "CSV of F1 scores")->required();
  matrix->add_flag("--no-normalize", ss_no_normalize, "Use raw dot products");
  matrix->callback([&] {
    auto q = import_directory(g.path(sm_queries));
    auto t = import_directory(g.path(sm_targets));
    if (!ss_no_normalize) {
      q = q.normalized();
      t = t.normalized();
    }
    std::vector<std::string> rows, cols;
    std::vector<EmbeddingSequence> qs, ts;
    for (const auto& [k, e] : q.entries()) rows.push_back(sqe_file_name(k)), qs.push_back(e);
    for (const auto& [k, e] : t.entries()) cols.push_back(sqe_file_name(k)), ts.push_back(e);
    const auto scores = seqsim_batch(qs, ts, {{}, g.workers});
    write_scores_csv(g.path(sm_out), rows, cols, scores);
    std::cout << "scored " << rows.size() << " x " << cols.size() << " pairs\n";
  });

  // retrieve run
  auto* retrieve = app.add_subcommand("retrieve", "Speech-to-speech retrieval")->require_subcommand(1);
  auto* rrun = retrieve->add_subcommand("run", "Recall matrix over all city pairs");
  std::string rr_manifest, rr_embeddings, rr_out;
  RetrievalPolicy rr_policy;
  bool rr_no_normalize = false;
  rrun->add_option("--manifest", rr_manifest)->required();
  rrun->add_option("--embeddings", rr_embeddings)->required();
  rrun->add_option("--out", rr_out, "Report directory")->required();
  rrun->add_flag("--include-diagonal", rr_policy.include_diagonal, "Also score same-subgroup cells");
  rrun->add_option("--topk", rr_policy.topk)->capture_default_str()->check(CLI::PositiveNumber);
  rrun->add_flag("--no-normalize", rr_no_normalize, "Use raw dot products");
  rrun->callback([&] {
    const auto res = load(g, rr_manifest, false, false);
    auto imp = import_embeddings(g.path(rr_embeddings), res.manifest);
    print_warnings(imp.warnings);
    EmbeddingStore store = rr_no_normalize ? std::move(imp.store) : imp.store.normalized();
    rr_policy.workers = g.workers;
    const RecallRun run = recall_matrix(store, res.manifest, rr_policy);
    for (const auto& s : run.skipped)
      std::cerr << "warning: skipped " << s.source_site << " -> " << s.target_site << ": " << s.reason << '\n';
    if (run.pairs.empty()) throw runtime_error("no usable site pairs for retrieval");
    ReportProvenance prov;
    prov.manifest_hash = manifest_hash(res.manifest);
    prov.provider_id = store.provider_id();
    prov.normalized = !rr_no_normalize;
    prov.topk = rr_policy.topk;
    write_recall_outputs(g.path(rr_out), run, prov);
    std::cout << render_markdown(run.matrix, prov);
  });

  // cer score
  auto* cer_cmd = app.add_subcommand("cer", "Character error rate")->require_subcommand(1);
  auto* score = cer_cmd->add_subcommand("score", "Score hypotheses against references");
  std::string cs_ref, cs_hyp, cs_table, cs_exceptions, cs_details;
  bool cs_no_erhua = false;
  score->add_option("--ref", cs_ref, "<utt_key>\\t<text> references")->required();
  score->add_option("--hyp", cs_hyp, "<utt_key>\\t<text> hypotheses")->required();
  score->add_option("--trad2simp", cs_table, "Traditional->simplified table (TSV)");
  score->add_option("--erhua-exceptions", cs_exceptions, "Words whose 儿 is kept");
  score->add_flag("--no-erhua", cs_no_erhua, "Keep every 儿");
  score->add_option("--details", cs_details, "Write per-utterance results (TSV)");
  score->callback([&] {
    NormalizationConfig cfg;
    cfg.erhua_enabled = !cs_no_erhua;
    if (!cs_table.empty()) cfg.trad2simp = std::make_shared<TradSimpTable>(TradSimpTable::load(g.path(cs_table)));
    if (!cs_exceptions.empty()) cfg.erhua_exceptions = NormalizationConfig::load_exceptions(g.path(cs_exceptions));
    const auto refs = read_keyed_text(g.path(cs_ref));
    const auto hyps = read_keyed_text(g.path(cs_hyp));
    if (refs.size() != hyps.size()) {
      throw validation_error("length mismatch: " + std::to_string(refs.size()) + " references, " +
                             std::to_string(hyps.size()) + " hypotheses");
    }
    std::map<std::string, std::string> hyp_by_key(hyps.begin(), hyps.end());
    std::vector<std::string> r, h;
    for (const auto& [key, text] : refs) {
      auto it = hyp_by_key.find(key);
      if (it == hyp_by_key.end()) throw validation_error("no hypothesis for utterance '" + key + "'");
      r.push_back(text);
      h.push_back(it->second);
    }
    const CorpusCer result = corpus_cer(r, h, cfg);
    std::printf("CER %.4f (%zu edits / %zu reference tokens, %zu utterances)\n", result.overall, result.total_edits,
                result.total_ref_tokens, refs.size());
    std::cout << "trad2simp " << (cfg.trad2simp ? cfg.trad2simp->hash() : std::string("none")) << ", erhua "
              << (cfg.erhua_enabled ? "stripped" : "kept") << '\n';
    if (!cs_details.empty()) {
      std::ofstream out(g.path(cs_details));
      if (!out) throw runtime_error("cannot write " + cs_details);
      out << "utt_key\tedits\tref_tokens\thyp_tokens\tcer\n";
      for (std::size_t i = 0; i < refs.size(); ++i) {
        const auto& u = result.per_utterance[i];
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", u.rate());
        out << refs[i].first << '\t' << u.edits << '\t' << u.ref_tokens << '\t' << u.hyp_tokens << '\t' << buf << '\n';
      }
    }
  });

  // synth make
  auto* synth = app.add_subcommand("synth", "Synthetic corpora")->require_subcommand(1);
  auto* make = synth->add_subcommand("make", "Generate a tone-sequence corpus");
  SynthOptions sy_opts;
  std::string sy_out, sy_mode = "clone";
  make->add_option("--out", sy_out)->required();
  make->add_option("--mode", sy_mode, "clone | perturbed | random")->capture_default_str();
  make->add_option("--subgroups", sy_opts.n_subgroups)->capture_default_str();
  make->add_option("--sites", sy_opts.sites_per_subgroup, "Sites per subgroup")->capture_default_str();
  make->add_option("--sentences", sy_opts.n_sentences)->capture_default_str();
  make->add_option("--noise-db", sy_opts.noise_db, "SNR for perturbed mode")->capture_default_str();
  make->add_option("--seed", sy_opts.seed)->capture_default_str();
  make->callback([&] {
    sy_opts.mode = parse_synth_mode(sy_mode);
    const auto corpus = make_synthetic_corpus(sy_opts, g.path(sy_out));
    std::cout << "wrote " << corpus.manifest_path.string() << " (" << corpus.manifest.sites().size() << " sites, "
              << corpus.manifest.utterances().size() << " utterances)\n";
  });

  // run --config
  auto* run = app.add_subcommand("run", "Full pipeline from a config file");
  std::string run_config;
  run->add_option("--config", run_config, "key = value config file")->required();
  run->callback([&] {
    RunConfig cfg = RunConfig::load(g.path(run_config));
    if (run->get_parent()->get_option("--workers")->count() > 0) cfg.workers = g.workers;
    const EvalReport rep = run_pipeline(cfg, g.root);
    print_warnings(rep.warnings);
    std::cout << render_markdown(rep.recall.matrix, rep.provenance, rep.recall.skipped);
    std::cout << "\nconfig_hash " << rep.config_hash << '\n';
    for (const auto& t : rep.timings) std::printf("%-9s %8.2f s\n", t.stage.c_str(), t.seconds);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
