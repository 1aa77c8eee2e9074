#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialign/error.hpp"
#include "dialign/hash.hpp"
#include "dialign/wav.hpp"

namespace dialign {

// ---------------------------------------------------------------------------
// Subgroup
// ---------------------------------------------------------------------------

/// Declaration order is the row/column order of recall matrices.
enum class SubgroupKind {
  kMandarinStd,
  kMandarinDialect,
  kMin,
  kWu,
  kYue,
  kXiang,
  kGan,
  kHakka,
  kOther,
};

/// A top-level dialect cluster. Parsing is case- and punctuation-insensitive,
/// so "Mandarin (Std)", "mandarin_std" and "MandarinStd" are the same label.
class Subgroup {
 public:
  Subgroup() = default;
  explicit Subgroup(SubgroupKind kind) : kind_(kind) {}

  static Subgroup parse(std::string_view label) {
    std::string key;
    for (char c : label) {
      if (std::isalnum(static_cast<unsigned char>(c)))
        key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    for (const auto& [k, name] : known()) {
      std::string canon;
      for (char c : name) canon.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      if (key == canon) return Subgroup(k);
    }
    if (key == "standardmandarin" || key == "mandarinstandard") return Subgroup(SubgroupKind::kMandarinStd);
    if (key == "mandarin" || key == "dialectalmandarin") return Subgroup(SubgroupKind::kMandarinDialect);
    if (key.empty()) throw validation_error("empty subgroup label");
    Subgroup s(SubgroupKind::kOther);
    s.other_ = key;
    return s;
  }

  SubgroupKind kind() const { return kind_; }

  /// Canonical identifier, e.g. "MandarinStd", or the normalized label of an
  /// Other subgroup.
  std::string name() const {
    if (kind_ == SubgroupKind::kOther) return other_;
    for (const auto& [k, n] : known())
      if (k == kind_) return std::string(n);
    return {};
  }

  /// Human-readable label used as a report column header.
  std::string display_name() const {
    switch (kind_) {
      case SubgroupKind::kMandarinStd: return "Mandarin (Std)";
      case SubgroupKind::kMandarinDialect: return "Mandarin (Dialect)";
      default: return name();
    }
  }

  friend bool operator==(const Subgroup&, const Subgroup&) = default;
  friend auto operator<=>(const Subgroup& a, const Subgroup& b) {
    if (auto c = a.kind_ <=> b.kind_; c != 0) return c;
    return a.other_ <=> b.other_;
  }

 private:
  static const std::vector<std::pair<SubgroupKind, std::string_view>>& known() {
    static const std::vector<std::pair<SubgroupKind, std::string_view>> k = {
        {SubgroupKind::kMandarinStd, "MandarinStd"},
        {SubgroupKind::kMandarinDialect, "MandarinDialect"},
        {SubgroupKind::kMin, "Min"},
        {SubgroupKind::kWu, "Wu"},
        {SubgroupKind::kYue, "Yue"},
        {SubgroupKind::kXiang, "Xiang"},
        {SubgroupKind::kGan, "Gan"},
        {SubgroupKind::kHakka, "Hakka"},
    };
    return k;
  }

  SubgroupKind kind_ = SubgroupKind::kOther;
  std::string other_;
};

// ---------------------------------------------------------------------------
// Data model
// ---------------------------------------------------------------------------

struct Site {
  std::string site_id;
  std::string display_name;
  Subgroup subgroup;

  friend bool operator==(const Site&, const Site&) = default;
};

struct Utterance {
  std::string site_id;
  std::int64_t sentence_id = 0;  // parallel-alignment key, >= 1
  std::string audio_path;        // relative to the manifest's audio root
  std::optional<std::string> transcript;
  std::optional<double> duration_s;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

/// Validated, immutable corpus description. Construction checks every
/// invariant; instances are safe to share read-only between threads.
class Manifest {
 public:
  Manifest() = default;

  Manifest(std::vector<Site> sites, std::vector<Utterance> utterances, std::string audio_root = {})
      : sites_(std::move(sites)), utterances_(std::move(utterances)), audio_root_(std::move(audio_root)) {
    for (std::size_t i = 0; i < sites_.size(); ++i) {
      if (sites_[i].site_id.empty()) throw validation_error("site with empty site_id");
      if (!site_index_.emplace(sites_[i].site_id, i).second)
        throw validation_error("duplicate site_id '" + sites_[i].site_id + "'");
    }
    for (std::size_t i = 0; i < utterances_.size(); ++i) {
      const Utterance& u = utterances_[i];
      auto it = site_index_.find(u.site_id);
      if (it == site_index_.end())
        throw validation_error("utterance references unknown site_id '" + u.site_id + "'");
      if (u.sentence_id < 1)
        throw validation_error("sentence_id must be >= 1 (site '" + u.site_id + "')");
      if (u.duration_s && !(*u.duration_s > 0.0))
        throw validation_error("duration_s must be > 0 (site '" + u.site_id + "', sentence " +
                               std::to_string(u.sentence_id) + ")");
      if (!utt_index_.emplace(std::make_pair(u.site_id, u.sentence_id), i).second)
        throw validation_error("duplicate (site_id, sentence_id) = (" + u.site_id + ", " +
                               std::to_string(u.sentence_id) + ")");
      sentence_ids_[u.site_id].push_back(u.sentence_id);
    }
    for (auto& [_, ids] : sentence_ids_) std::sort(ids.begin(), ids.end());
  }

  const std::vector<Site>& sites() const { return sites_; }
  const std::vector<Utterance>& utterances() const { return utterances_; }
  const std::string& audio_root() const { return audio_root_; }

  const Site* find_site(std::string_view site_id) const {
    auto it = site_index_.find(std::string(site_id));
    return it == site_index_.end() ? nullptr : &sites_[it->second];
  }

  const Site& site(std::string_view site_id) const {
    const Site* s = find_site(site_id);
    if (!s) throw validation_error("unknown site_id '" + std::string(site_id) + "'");
    return *s;
  }

  const Utterance* find_utterance(std::string_view site_id, std::int64_t sentence_id) const {
    auto it = utt_index_.find(std::make_pair(std::string(site_id), sentence_id));
    return it == utt_index_.end() ? nullptr : &utterances_[it->second];
  }

  /// Sorted sentence IDs recorded for a site (empty for a site with no
  /// utterances).
  const std::vector<std::int64_t>& sentence_ids(std::string_view site_id) const {
    static const std::vector<std::int64_t> kEmpty;
    site(site_id);
    auto it = sentence_ids_.find(std::string(site_id));
    return it == sentence_ids_.end() ? kEmpty : it->second;
  }

  std::filesystem::path audio_file(const Utterance& u) const {
    std::filesystem::path p(u.audio_path);
    if (p.is_absolute() || audio_root_.empty()) return p;
    return std::filesystem::path(audio_root_) / p;
  }

  friend bool operator==(const Manifest& a, const Manifest& b) {
    return a.sites_ == b.sites_ && a.utterances_ == b.utterances_ && a.audio_root_ == b.audio_root_;
  }

 private:
  std::vector<Site> sites_;
  std::vector<Utterance> utterances_;
  std::string audio_root_;
  std::map<std::string, std::size_t> site_index_;
  std::map<std::pair<std::string, std::int64_t>, std::size_t> utt_index_;
  std::map<std::string, std::vector<std::int64_t>> sentence_ids_;
};

// ---------------------------------------------------------------------------
// Manifest I/O
// ---------------------------------------------------------------------------

struct ManifestLoadOptions {
  /// Missing or unreadable audio is an error instead of a warning.
  bool strict = false;
  /// Recompute durations from WAV headers when the audio is readable.
  bool probe_audio = true;
};

struct ManifestLoadResult {
  Manifest manifest;
  std::vector<std::string> warnings;
};

/// Parses line-delimited manifest records. `source` names the input in error
/// messages; `audio_root` resolves relative audio paths.
inline ManifestLoadResult parse_manifest(std::istream& in, const std::string& audio_root,
                                         const ManifestLoadOptions& opts = {},
                                         const std::string& source = "manifest") {
  using nlohmann::json;
  std::vector<Site> sites;
  std::vector<Utterance> utts;
  std::vector<std::size_t> utt_lines;
  std::map<std::string, std::size_t> site_lines;
  std::map<std::pair<std::string, std::int64_t>, std::size_t> key_lines;
  std::vector<std::string> warnings;

  auto fail = [&](std::size_t line, const std::string& msg) -> Error {
    return validation_error(source + ":" + std::to_string(line) + ": " + msg);
  };

  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      throw fail(line_no, std::string("parse error: ") + e.what());
    }
    if (!rec.is_object()) throw fail(line_no, "record is not a JSON object");
    try {
      const std::string kind = rec.at("kind").get<std::string>();
      if (kind == "site") {
        Site s;
        s.site_id = rec.at("site_id").get<std::string>();
        s.display_name = rec.value("name", s.site_id);
        s.subgroup = Subgroup::parse(rec.at("subgroup").get<std::string>());
        if (s.site_id.empty()) throw fail(line_no, "empty site_id");
        if (auto [it, ok] = site_lines.emplace(s.site_id, line_no); !ok)
          throw fail(line_no, "duplicate site_id '" + s.site_id + "' (first declared at line " +
                                  std::to_string(it->second) + ")");
        sites.push_back(std::move(s));
      } else if (kind == "utt") {
        Utterance u;
        u.site_id = rec.at("site_id").get<std::string>();
        const json& sid = rec.at("sentence_id");
        if (!sid.is_number_integer()) throw fail(line_no, "sentence_id must be an integer");
        u.sentence_id = sid.get<std::int64_t>();
        if (u.sentence_id < 1) throw fail(line_no, "sentence_id must be >= 1");
        u.audio_path = rec.at("audio").get<std::string>();
        if (rec.contains("text") && !rec["text"].is_null()) u.transcript = rec["text"].get<std::string>();
        if (rec.contains("duration_s") && !rec["duration_s"].is_null()) {
          u.duration_s = rec["duration_s"].get<double>();
          if (!(*u.duration_s > 0.0)) throw fail(line_no, "duration_s must be > 0");
        }
        auto key = std::make_pair(u.site_id, u.sentence_id);
        if (auto [it, ok] = key_lines.emplace(key, line_no); !ok) {
          throw fail(line_no, "duplicate (site_id, sentence_id) = (" + u.site_id + ", " +
                                  std::to_string(u.sentence_id) + ") at lines " +
                                  std::to_string(it->second) + " and " + std::to_string(line_no));
        }
        utts.push_back(std::move(u));
        utt_lines.push_back(line_no);
      } else {
        throw fail(line_no, "unknown record kind '" + kind + "'");
      }
    } catch (const json::exception& e) {
      throw fail(line_no, std::string("bad record: ") + e.what());
    }
  }

  for (std::size_t i = 0; i < utts.size(); ++i) {
    if (!site_lines.count(utts[i].site_id))
      throw fail(utt_lines[i], "unknown site_id '" + utts[i].site_id + "'");
  }

  std::size_t n_std = 0;
  for (const Site& s : sites) n_std += s.subgroup.kind() == SubgroupKind::kMandarinStd;
  if (n_std > 1)
    warnings.push_back(std::to_string(n_std) + " sites carry subgroup MandarinStd; expected at most one");

  for (std::size_t i = 0; i < utts.size(); ++i) {
    Utterance& u = utts[i];
    std::filesystem::path p(u.audio_path);
    if (!p.is_absolute() && !audio_root.empty()) p = std::filesystem::path(audio_root) / p;
    std::error_code ec;
    if (!std::filesystem::is_regular_file(p, ec)) {
      const std::string msg = source + ":" + std::to_string(utt_lines[i]) + ": missing audio " + p.string();
      if (opts.strict) throw validation_error(msg);
      warnings.push_back(msg);
      continue;
    }
    if (!opts.probe_audio) continue;
    try {
      const double d = wav_duration_s(p);
      if (d > 0.0) u.duration_s = d;
    } catch (const Error& e) {
      const std::string msg = source + ":" + std::to_string(utt_lines[i]) + ": unreadable audio: " + e.what();
      if (opts.strict) throw validation_error(msg);
      warnings.push_back(msg);
    }
  }

  return {Manifest(std::move(sites), std::move(utts), audio_root), std::move(warnings)};
}

/// Loads a manifest file. Relative audio paths resolve against the file's
/// directory.
inline ManifestLoadResult load_manifest(const std::filesystem::path& path,
                                        const ManifestLoadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open manifest " + path.string());
  const std::string root = path.parent_path().string();
  return parse_manifest(in, root, opts, path.string());
}

inline void write_manifest(std::ostream& out, const Manifest& m) {
  using nlohmann::ordered_json;
  for (const Site& s : m.sites()) {
    ordered_json rec;
    rec["kind"] = "site";
    rec["site_id"] = s.site_id;
    rec["name"] = s.display_name;
    rec["subgroup"] = s.subgroup.name();
    out << rec.dump() << '\n';
  }
  for (const Utterance& u : m.utterances()) {
    ordered_json rec;
    rec["kind"] = "utt";
    rec["site_id"] = u.site_id;
    rec["sentence_id"] = u.sentence_id;
    rec["audio"] = u.audio_path;
    if (u.transcript) rec["text"] = *u.transcript;
    if (u.duration_s) rec["duration_s"] = *u.duration_s;
    out << rec.dump() << '\n';
  }
}

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw runtime_error("cannot write " + path.string());
  write_manifest(out, m);
}

/// Content fingerprint of the manifest's serialized records. The audio root
/// is excluded so relocating a corpus keeps its hash.
inline std::string manifest_hash(const Manifest& m) {
  std::ostringstream os;
  write_manifest(os, m);
  return hash_text(os.str());
}

// ---------------------------------------------------------------------------
// Statistics and alignment
// ---------------------------------------------------------------------------

struct CorpusStats {
  std::size_t num_sites = 0;
  std::size_t num_utterances = 0;
  std::size_t num_with_duration = 0;
  double total_duration_s = 0.0;
  double mean_duration_s = 0.0;
  double std_duration_s = 0.0;  // population std (divide by N)
};

inline CorpusStats corpus_stats(const Manifest& m) {
  CorpusStats st;
  st.num_sites = m.sites().size();
  st.num_utterances = m.utterances().size();
  double sum = 0.0;
  for (const Utterance& u : m.utterances()) {
    if (!u.duration_s) continue;
    ++st.num_with_duration;
    sum += *u.duration_s;
  }
  st.total_duration_s = sum;
  if (st.num_with_duration == 0) return st;
  st.mean_duration_s = sum / static_cast<double>(st.num_with_duration);
  double sq = 0.0;
  for (const Utterance& u : m.utterances()) {
    if (!u.duration_s) continue;
    const double d = *u.duration_s - st.mean_duration_s;
    sq += d * d;
  }
  st.std_duration_s = std::sqrt(sq / static_cast<double>(st.num_with_duration));
  return st;
}

/// "6 h 45 min" style rendering, rounded to the nearest minute.
inline std::string format_hours_minutes(double seconds) {
  const long total_min = std::lround(seconds / 60.0);
  return std::to_string(total_min / 60) + " h " + std::to_string(total_min % 60) + " min";
}

inline std::string format_stats(const CorpusStats& st) {
  std::ostringstream os;
  os << "# duration std is the population std (divide by N)\n";
  os << st.num_sites << " sites / " << st.num_utterances << " utterances\n";
  const std::size_t unknown = st.num_utterances - st.num_with_duration;
  if (st.num_with_duration == 0) {
    os << "duration: unknown for all utterances\n";
    return os.str();
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "total duration: %.1f s (%s)\nmean duration: %.2f +- %.2f s\n",
                st.total_duration_s, format_hours_minutes(st.total_duration_s).c_str(),
                st.mean_duration_s, st.std_duration_s);
  os << buf;
  if (unknown > 0) os << "duration unknown: " << unknown << " utterances\n";
  return os.str();
}

/// Sorted intersection of two sites' sentence-ID sets.
inline std::vector<std::int64_t> aligned_sentence_ids(const Manifest& m, std::string_view a,
                                                      std::string_view b) {
  const auto& ia = m.sentence_ids(a);
  const auto& ib = m.sentence_ids(b);
  std::vector<std::int64_t> out;
  std::set_intersection(ia.begin(), ia.end(), ib.begin(), ib.end(), std::back_inserter(out));
  return out;
}

/// Subgroups present in the manifest, in report order.
inline std::vector<Subgroup> manifest_subgroups(const Manifest& m) {
  std::vector<Subgroup> out;
  for (const Site& s : m.sites()) out.push_back(s.subgroup);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace dialign
