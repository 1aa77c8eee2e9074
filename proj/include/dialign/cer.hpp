#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dialign/error.hpp"
#include "dialign/textnorm.hpp"

namespace dialign {

/// Levenshtein distance over tokens with unit substitution, insertion and
/// deletion costs. O(|a|*|b|) time, O(|b|) memory.
inline std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::size_t edit_distance(const TokenSequence& a, const TokenSequence& b) {
  return edit_distance(std::span<const std::string>(a.tokens), std::span<const std::string>(b.tokens));
}

/// Edit distance divided by reference length; may exceed 1.
inline double cer(const TokenSequence& ref, const TokenSequence& hyp) {
  if (ref.empty()) throw validation_error("cer: empty reference (rate undefined)");
  return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

struct UtteranceCer {
  std::size_t edits = 0;
  std::size_t ref_tokens = 0;
  std::size_t hyp_tokens = 0;

  /// NaN when the normalized reference is empty.
  double rate() const {
    return ref_tokens ? static_cast<double>(edits) / static_cast<double>(ref_tokens)
                      : std::numeric_limits<double>::quiet_NaN();
  }
};

struct CorpusCer {
  double overall = 0.0;  // total edits / total reference tokens
  std::size_t total_edits = 0;
  std::size_t total_ref_tokens = 0;
  std::vector<UtteranceCer> per_utterance;
};

/// Normalizes both sides and micro-averages: sum of distances over sum of
/// reference lengths. Pairing is by index.
inline CorpusCer corpus_cer(const std::vector<std::string>& refs, const std::vector<std::string>& hyps,
                            const NormalizationConfig& cfg = {}) {
  if (refs.size() != hyps.size()) {
    throw validation_error("corpus_cer: length mismatch (" + std::to_string(refs.size()) + " references, " +
                           std::to_string(hyps.size()) + " hypotheses)");
  }
  CorpusCer out;
  out.per_utterance.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const TokenSequence r = normalize_text(refs[i], cfg);
    const TokenSequence h = normalize_text(hyps[i], cfg);
    UtteranceCer u{edit_distance(r, h), r.size(), h.size()};
    out.total_edits += u.edits;
    out.total_ref_tokens += u.ref_tokens;
    out.per_utterance.push_back(u);
  }
  if (out.total_ref_tokens == 0) throw validation_error("corpus_cer: all references are empty after normalization");
  out.overall = static_cast<double>(out.total_edits) / static_cast<double>(out.total_ref_tokens);
  return out;
}

/// `<utt_key>\t<text>` lines; a line without a tab is a key with empty text.
inline std::vector<std::pair<std::string, std::string>> read_keyed_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) out.emplace_back(line, "");
    else out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

}  // namespace dialign
