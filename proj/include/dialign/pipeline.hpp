#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialign/baseline_encoder.hpp"
#include "dialign/corpus.hpp"
#include "dialign/embedding.hpp"
#include "dialign/error.hpp"
#include "dialign/fbank.hpp"
#include "dialign/hash.hpp"
#include "dialign/parallel.hpp"
#include "dialign/report.hpp"
#include "dialign/retrieval.hpp"
#include "dialign/wav.hpp"

namespace dialign {

enum class ProviderKind { kBaseline, kImport };

/// Everything a run depends on. Serializes to a TOML-like text of
/// `key = value` lines grouped in [sections].
struct RunConfig {
  std::string manifest;
  std::string output;
  std::string cache;  // empty = "<output>.cache"
  bool strict = false;
  FbankOptions features;
  ProviderKind provider = ProviderKind::kBaseline;
  BaselineEncoderOptions baseline;
  std::string import_dir;
  bool normalize = true;
  RetrievalPolicy retrieval;
  unsigned workers = 0;  // execution only; never changes results

  std::string cache_dir() const { return cache.empty() ? output + ".cache" : cache; }

  /// Canonical text. Without `include_execution` the worker count is left
  /// out; that form is what the config hash covers.
  std::string to_text(bool include_execution = true) const {
    std::ostringstream os;
    auto str = [](const std::string& s) {
      std::string out = "\"";
      for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
      }
      return out + "\"";
    };
    auto num = [](double v) {
      std::ostringstream n;
      n.precision(17);
      n << v;
      return n.str();
    };
    auto boolean = [](bool b) { return b ? "true" : "false"; };
    os << "manifest = " << str(manifest) << '\n';
    os << "output = " << str(output) << '\n';
    os << "cache = " << str(cache_dir()) << '\n';
    os << "strict = " << boolean(strict) << '\n';
    if (include_execution) os << "workers = " << workers << '\n';
    os << "\n[features]\n";
    os << "bins = " << features.num_bins << '\n';
    os << "frame_length_ms = " << num(features.frame_length_ms) << '\n';
    os << "frame_shift_ms = " << num(features.frame_shift_ms) << '\n';
    os << "low_freq_hz = " << num(features.low_freq_hz) << '\n';
    os << "high_freq_hz = " << num(features.high_freq_hz) << '\n';
    if (provider == ProviderKind::kBaseline) {
      os << "\n[baseline]\n";
      os << "dim = " << baseline.out_dim << '\n';
      os << "stack = " << baseline.stack << '\n';
      os << "stride = " << baseline.stride << '\n';
      os << "seed = " << baseline.seed << '\n';
      os << "mean_normalize = " << boolean(baseline.mean_normalize) << '\n';
    } else {
      os << "\n[import]\n";
      os << "dir = " << str(import_dir) << '\n';
    }
    os << "\n[retrieval]\n";
    os << "normalize = " << boolean(normalize) << '\n';
    os << "include_diagonal = " << boolean(retrieval.include_diagonal) << '\n';
    os << "topk = " << retrieval.topk << '\n';
    os << "block = " << retrieval.seqsim.block << '\n';
    return os.str();
  }

  std::string hash() const { return hash_text(to_text(false)); }

  void validate() const {
    if (manifest.empty()) throw validation_error("config: manifest is required");
    if (output.empty()) throw validation_error("config: output is required");
    if (features.num_bins < 1) throw validation_error("config: features.bins must be >= 1");
    if (!(features.frame_length_ms > 0) || !(features.frame_shift_ms > 0))
      throw validation_error("config: frame length and shift must be > 0");
    if (provider == ProviderKind::kBaseline &&
        (baseline.out_dim < 1 || baseline.stack < 1 || baseline.stride < 1))
      throw validation_error("config: baseline dim, stack and stride must be >= 1");
    if (provider == ProviderKind::kImport && import_dir.empty())
      throw validation_error("config: import.dir is required for the import provider");
    if (retrieval.topk < 1) throw validation_error("config: retrieval.topk must be >= 1");
    if (retrieval.seqsim.block < 1) throw validation_error("config: retrieval.block must be >= 1");
  }

  static RunConfig parse(std::istream& in, const std::string& source = "config") {
    std::map<std::string, std::pair<std::string, std::size_t>> kv;  // key -> (raw value, line)
    std::string section;
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](std::size_t l, const std::string& msg) {
      return validation_error(source + ":" + std::to_string(l) + ": " + msg);
    };
    while (std::getline(in, line)) {
      ++line_no;
      std::string t = trim(strip_comment(line));
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']') throw fail(line_no, "malformed section header");
        section = trim(t.substr(1, t.size() - 2));
        if (section != "features" && section != "baseline" && section != "import" && section != "retrieval")
          throw fail(line_no, "unknown section [" + section + "]");
        kv.emplace(section + ".", std::make_pair(std::string(), line_no));
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw fail(line_no, "expected key = value");
      const std::string key = (section.empty() ? "" : section + ".") + trim(t.substr(0, eq));
      if (!kv.emplace(key, std::make_pair(trim(t.substr(eq + 1)), line_no)).second)
        throw fail(line_no, "duplicate key '" + key + "'");
    }

    const bool has_baseline = kv.count("baseline.");
    const bool has_import = kv.count("import.");
    if (has_baseline && has_import)
      throw validation_error(source + ": both [baseline] and [import] providers are set; choose one");

    RunConfig cfg;
    cfg.provider = has_import ? ProviderKind::kImport : ProviderKind::kBaseline;
    for (const auto& [key, entry] : kv) {
      const auto& [raw, l] = entry;
      if (key.back() == '.') continue;
      try {
        if (key == "manifest") cfg.manifest = as_string(raw);
        else if (key == "output") cfg.output = as_string(raw);
        else if (key == "cache") cfg.cache = as_string(raw);
        else if (key == "strict") cfg.strict = as_bool(raw);
        else if (key == "workers") cfg.workers = static_cast<unsigned>(as_int(raw, 0));
        else if (key == "features.bins") cfg.features.num_bins = static_cast<int>(as_int(raw, 1));
        else if (key == "features.frame_length_ms") cfg.features.frame_length_ms = as_double(raw);
        else if (key == "features.frame_shift_ms") cfg.features.frame_shift_ms = as_double(raw);
        else if (key == "features.low_freq_hz") cfg.features.low_freq_hz = as_double(raw);
        else if (key == "features.high_freq_hz") cfg.features.high_freq_hz = as_double(raw);
        else if (key == "baseline.dim") cfg.baseline.out_dim = static_cast<int>(as_int(raw, 1));
        else if (key == "baseline.stack") cfg.baseline.stack = static_cast<int>(as_int(raw, 1));
        else if (key == "baseline.stride") cfg.baseline.stride = static_cast<int>(as_int(raw, 1));
        else if (key == "baseline.seed") cfg.baseline.seed = static_cast<std::uint64_t>(as_int(raw, 0));
        else if (key == "baseline.mean_normalize") cfg.baseline.mean_normalize = as_bool(raw);
        else if (key == "import.dir") cfg.import_dir = as_string(raw);
        else if (key == "retrieval.normalize") cfg.normalize = as_bool(raw);
        else if (key == "retrieval.include_diagonal") cfg.retrieval.include_diagonal = as_bool(raw);
        else if (key == "retrieval.topk") cfg.retrieval.topk = static_cast<int>(as_int(raw, 1));
        else if (key == "retrieval.block") cfg.retrieval.seqsim.block = static_cast<std::size_t>(as_int(raw, 1));
        else throw validation_error("unknown key");
      } catch (const Error& e) {
        throw fail(l, "'" + key + "': " + e.what());
      }
    }
    cfg.validate();
    return cfg;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open config " + path.string());
    return parse(in, path.string());
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  static std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '\\' && quoted) ++i;
      else if (s[i] == '"') quoted = !quoted;
      else if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static std::string as_string(const std::string& raw) {
    if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"') return raw;
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
      if (raw[i] == '\\' && i + 2 < raw.size()) ++i;
      out += raw[i];
    }
    return out;
  }

  static bool as_bool(const std::string& raw) {
    if (raw == "true") return true;
    if (raw == "false") return false;
    throw validation_error("expected true or false, got '" + raw + "'");
  }

  static long long as_int(const std::string& raw, long long min) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(raw, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != raw.size() || raw.empty()) throw validation_error("expected an integer, got '" + raw + "'");
    if (v < min) throw validation_error("must be >= " + std::to_string(min));
    return v;
  }

  static double as_double(const std::string& raw) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(raw, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != raw.size() || raw.empty()) throw validation_error("expected a number, got '" + raw + "'");
    return v;
  }
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct EvalReport {
  std::string config_text;  // canonical, hashed form
  std::string config_hash;
  CorpusStats stats;
  RecallRun recall;
  ReportProvenance provenance;
  std::filesystem::path pairs_path;
  std::vector<std::string> warnings;
  std::vector<StageTiming> timings;
};

/// Writes recall_matrix.csv, recall_matrix.md and pairs.jsonl into `dir`.
inline void write_recall_outputs(const std::filesystem::path& dir, const RecallRun& run, const ReportProvenance& prov) {
  std::filesystem::create_directories(dir);
  auto put = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw runtime_error("cannot write " + (dir / name).string());
    out << text;
  };
  put("recall_matrix.csv", render_csv(run.matrix, prov));
  put("recall_matrix.md", render_markdown(run.matrix, prov, run.skipped));
  put("pairs.jsonl", render_pairs_jsonl(run.pairs));
}

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& root, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_absolute() || root.empty()) return path;
  return root / path;
}

/// Write-then-rename so that concurrent writers of one cache key never
/// expose a partial file.
inline void write_sqe_atomic(const std::filesystem::path& path, const EmbeddingSequence& e, std::size_t salt) {
  auto tmp = path;
  tmp += ".tmp" + std::to_string(salt);
  write_sqe(tmp, e);
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// Features and baseline embeddings for every manifest utterance, cached by
/// content hash of (audio bytes, feature params) and (feature key, encoder
/// id). Utterances whose audio is missing or too short are excluded with a
/// warning.
inline EmbeddingStore build_baseline_store(const Manifest& m, const RunConfig& cfg,
                                           const std::filesystem::path& cache_dir, std::vector<std::string>& warnings,
                                           std::vector<StageTiming>& timings) {
  namespace fs = std::filesystem;
  fs::create_directories(cache_dir / "features");
  fs::create_directories(cache_dir / "embeddings");
  const FbankComputer fbank(cfg.features);
  const BaselineEncoder encoder(static_cast<std::size_t>(cfg.features.num_bins), cfg.baseline);
  const std::string fbank_id = cfg.features.id();
  const std::string encoder_id = encoder.id();
  const auto& utts = m.utterances();

  std::vector<std::optional<EmbeddingSequence>> features(utts.size());
  std::vector<std::string> feature_keys(utts.size());
  std::vector<std::string> problems(utts.size());
  const WavReadOptions wav_opts{cfg.strict, cfg.features.sample_rate_hz};

  auto t0 = std::chrono::steady_clock::now();
  parallel_for(utts.size(), cfg.workers, [&](std::size_t i) {
    const fs::path audio = m.audio_file(utts[i]);
    std::error_code ec;
    if (!fs::is_regular_file(audio, ec)) {
      problems[i] = "missing audio " + audio.string();
      return;
    }
    Fnv1a64 h;
    h.update(fbank_id).update("\n");
    hash_file_into(h, audio);
    feature_keys[i] = h.hex();
    const fs::path cached = cache_dir / "features" / (feature_keys[i] + ".sqe");
    if (fs::is_regular_file(cached, ec)) {
      features[i] = read_sqe(cached);
    } else {
      const FeatureMatrix f = fbank.compute(decode_wav(audio, wav_opts));
      features[i] = features_to_sequence(f);
      detail::write_sqe_atomic(cached, *features[i], i);
    }
    if (features[i]->num_frames == 0) problems[i] = "audio shorter than one frame: " + audio.string();
  });
  auto t1 = std::chrono::steady_clock::now();
  timings.push_back({"features", std::chrono::duration<double>(t1 - t0).count()});

  std::vector<std::optional<EmbeddingSequence>> embeddings(utts.size());
  parallel_for(utts.size(), cfg.workers, [&](std::size_t i) {
    if (!problems[i].empty() || !features[i]) return;
    const std::string key = hash_text(feature_keys[i] + "\n" + encoder_id);
    const fs::path cached = cache_dir / "embeddings" / (key + ".sqe");
    std::error_code ec;
    if (fs::is_regular_file(cached, ec)) {
      embeddings[i] = read_sqe(cached);
    } else {
      embeddings[i] = encoder.encode(sequence_to_features(*features[i]));
      detail::write_sqe_atomic(cached, *embeddings[i], i);
    }
  });
  timings.push_back({"embed", std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count()});

  std::map<UtteranceKey, EmbeddingSequence> entries;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    if (!problems[i].empty()) {
      warnings.push_back(problems[i]);
      continue;
    }
    entries.emplace(UtteranceKey{utts[i].site_id, utts[i].sentence_id}, std::move(*embeddings[i]));
  }
  return EmbeddingStore(std::move(entries), encoder_id);
}

/// Runs ingest -> features -> embed -> retrieve -> report. Per-pair failures
/// are collected in the report; a run with no usable city pair fails.
inline EvalReport run_pipeline(const RunConfig& cfg, const std::filesystem::path& root = {}) {
  namespace fs = std::filesystem;
  using clock = std::chrono::steady_clock;
  cfg.validate();
  EvalReport rep;
  rep.config_text = cfg.to_text(false);
  rep.config_hash = cfg.hash();

  auto t = clock::now();
  auto lap = [&](const char* stage) {
    const auto now = clock::now();
    rep.timings.push_back({stage, std::chrono::duration<double>(now - t).count()});
    t = now;
  };

  const fs::path manifest_path = detail::resolve(root, cfg.manifest);
  ManifestLoadResult loaded = load_manifest(manifest_path, {cfg.strict, true});
  const Manifest& m = loaded.manifest;
  rep.warnings = std::move(loaded.warnings);
  rep.stats = corpus_stats(m);
  lap("ingest");

  EmbeddingStore store;
  if (cfg.provider == ProviderKind::kBaseline) {
    store = build_baseline_store(m, cfg, detail::resolve(root, cfg.cache_dir()), rep.warnings, rep.timings);
  } else {
    ImportResult imp = import_embeddings(detail::resolve(root, cfg.import_dir), m);
    for (auto& w : imp.warnings) rep.warnings.push_back(std::move(w));
    store = std::move(imp.store);
  }
  t = clock::now();
  if (cfg.normalize) {
    std::map<UtteranceKey, EmbeddingSequence> entries;
    for (const auto& [key, seq] : store.entries()) entries.emplace(key, seq.normalized ? seq : l2_normalize(seq));
    store = EmbeddingStore(std::move(entries), store.provider_id());
  }

  RetrievalPolicy policy = cfg.retrieval;
  policy.workers = cfg.workers;
  rep.recall = recall_matrix(store, m, policy);
  lap("retrieve");
  if (rep.recall.pairs.empty()) throw runtime_error("no usable site pairs for retrieval");

  rep.provenance.manifest_hash = manifest_hash(m);
  rep.provenance.provider_id = store.provider_id();
  rep.provenance.normalized = cfg.normalize;
  rep.provenance.config_hash = rep.config_hash;
  rep.provenance.topk = cfg.retrieval.topk;

  const fs::path out_dir = detail::resolve(root, cfg.output);
  write_recall_outputs(out_dir, rep.recall, rep.provenance);
  rep.pairs_path = out_dir / "pairs.jsonl";
  lap("report");

  nlohmann::ordered_json j;
  j["toolkit_version"] = kToolkitVersion;
  j["config_hash"] = rep.config_hash;
  j["config"] = rep.config_text;
  j["execution"] = {{"workers", cfg.workers == 0 ? default_workers() : cfg.workers}};
  j["corpus"] = {{"sites", rep.stats.num_sites},
                 {"utterances", rep.stats.num_utterances},
                 {"total_duration_s", rep.stats.total_duration_s},
                 {"mean_duration_s", rep.stats.mean_duration_s},
                 {"std_duration_s", rep.stats.std_duration_s},
                 {"std_kind", "population"}};
  j["manifest_hash"] = rep.provenance.manifest_hash;
  j["embedding_provider"] = rep.provenance.provider_id;
  j["pairs_path"] = "pairs.jsonl";
  j["n_pairs"] = rep.recall.pairs.size();
  j["n_excluded_sentences"] = rep.recall.total_excluded;
  auto& skipped = j["skipped_pairs"] = nlohmann::ordered_json::array();
  for (const auto& s : rep.recall.skipped)
    skipped.push_back({{"source_site", s.source_site}, {"target_site", s.target_site}, {"reason", s.reason}});
  j["warnings"] = rep.warnings;
  auto& timing = j["timings_s"] = nlohmann::ordered_json::object();
  for (const auto& st : rep.timings) timing[st.stage] = st.seconds;
  std::ofstream out(out_dir / "report.json");
  if (!out) throw runtime_error("cannot write " + (out_dir / "report.json").string());
  out << j.dump(2) << '\n';
  return rep;
}

}  // namespace dialign
