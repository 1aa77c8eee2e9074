#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dialign/error.hpp"
#include "dialign/hash.hpp"
#include "dialign/utf8.hpp"

namespace dialign {

inline constexpr char32_t kErhua = U'儿';  // 儿

inline bool is_cjk_ideograph(char32_t c) {
  return (c >= 0x4E00 && c <= 0x9FFF) ||    // unified
         (c >= 0x3400 && c <= 0x4DBF) ||    // extension A
         (c >= 0xF900 && c <= 0xFAFF) ||    // compatibility
         (c >= 0x20000 && c <= 0x2FA1F) ||  // extensions B-F, compatibility supplement
         (c >= 0x30000 && c <= 0x3134F) ||  // extension G
         c == 0x3007;                       // 〇
}

/// Maps a codepoint that belongs in a Latin/digit run to its folded form
/// (fullwidth -> ASCII, upper -> lower). Returns 0 for anything else.
inline char32_t fold_latin(char32_t c) {
  if (c >= 0xFF10 && c <= 0xFF19) c = c - 0xFF10 + U'0';
  else if (c >= 0xFF21 && c <= 0xFF3A) c = c - 0xFF21 + U'A';
  else if (c >= 0xFF41 && c <= 0xFF5A) c = c - 0xFF41 + U'a';
  if (c >= U'A' && c <= U'Z') return c + 32;
  if ((c >= U'a' && c <= U'z') || (c >= U'0' && c <= U'9')) return c;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;  // Latin-1 capitals
  if (c >= 0xDF && c <= 0xFF && c != 0xF7) return c;
  if (c >= 0x100 && c <= 0x24F) return c;  // Latin Extended-A/B, case kept
  return 0;
}

/// Single-codepoint traditional -> simplified table, loaded from a TSV file of
/// `trad<TAB>simp` lines (`#` comments and blank lines ignored).
class TradSimpTable {
 public:
  TradSimpTable() = default;

  static TradSimpTable parse(std::istream& in, const std::string& source = "trad2simp") {
    TradSimpTable t;
    std::string line;
    std::size_t line_no = 0;
    Fnv1a64 h;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      h.update(line).update("\n");
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw validation_error(source + ":" + std::to_string(line_no) + ": expected trad<TAB>simp");
      const auto from = utf8::decode(line.substr(0, tab));
      const auto to = utf8::decode(line.substr(tab + 1));
      if (from.size() != 1 || to.size() != 1) {
        throw validation_error(source + ":" + std::to_string(line_no) +
                               ": mapping must be one codepoint to one codepoint");
      }
      if (auto [it, ok] = t.map_.emplace(from[0], to[0]); !ok && it->second != to[0])
        throw validation_error(source + ":" + std::to_string(line_no) + ": conflicting mapping");
    }
    for (const auto& [from, to] : t.map_) {
      auto it = t.map_.find(to);
      if (to != from && it != t.map_.end() && it->second != to) {
        throw validation_error(source + ": chained mapping through U+" + hex(to) +
                               " (targets must map to themselves)");
      }
    }
    t.hash_ = h.hex();
    return t;
  }

  static TradSimpTable load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open trad->simp table " + path.string());
    return parse(in, path.string());
  }

  char32_t map(char32_t c) const {
    auto it = map_.find(c);
    return it == map_.end() ? c : it->second;
  }

  std::size_t size() const { return map_.size(); }
  /// Fingerprint of the table contents, reported alongside CER results.
  const std::string& hash() const { return hash_; }

 private:
  static std::string hex(char32_t c) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04X", static_cast<unsigned>(c));
    return buf;
  }

  std::unordered_map<char32_t, char32_t> map_;
  std::string hash_ = Fnv1a64().hex();
};

struct NormalizationConfig {
  std::shared_ptr<const TradSimpTable> trad2simp;  // null = no conversion
  bool erhua_enabled = true;
  /// Words whose 儿 is never stripped, e.g. 女儿, 儿子.
  std::vector<std::u32string> erhua_exceptions;

  static std::vector<std::u32string> load_exceptions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open erhua exception list " + path.string());
    std::vector<std::u32string> out;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      out.push_back(utf8::decode(line));
    }
    return out;
  }
};

/// Normalized tokens: each a single CJK ideograph or one maximal run of
/// Latin letters/digits.
struct TokenSequence {
  std::vector<std::string> tokens;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }

  /// Tokens joined by single spaces (the normalized text form).
  std::string joined() const {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) out += ' ';
      out += tokens[i];
    }
    return out;
  }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

namespace detail {

/// True when some exception word, aligned so that one of its 儿 sits at
/// position `pos`, matches the text.
inline bool erhua_exception_at(const std::u32string& text, std::size_t pos,
                               const std::vector<std::u32string>& exceptions) {
  for (const auto& word : exceptions) {
    for (std::size_t k = 0; k < word.size(); ++k) {
      if (word[k] != kErhua || k > pos) continue;
      const std::size_t start = pos - k;
      if (start + word.size() <= text.size() && text.compare(start, word.size(), word) == 0) return true;
    }
  }
  return false;
}

}  // namespace detail

/// Trad->simp mapping, erhua removal (儿 directly after a CJK ideograph,
/// unless an exception word covers it), punctuation/whitespace stripping,
/// Latin lowercasing, then tokenization. Never fails; invalid UTF-8 bytes
/// become U+FFFD and are dropped as punctuation.
inline TokenSequence normalize_text(std::string_view text, const NormalizationConfig& cfg = {}) {
  std::u32string s = utf8::decode(text);
  if (cfg.trad2simp)
    for (char32_t& c : s) c = cfg.trad2simp->map(c);

  std::u32string kept;
  kept.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (cfg.erhua_enabled && s[i] == kErhua && i > 0 && is_cjk_ideograph(s[i - 1]) &&
        !detail::erhua_exception_at(s, i, cfg.erhua_exceptions)) {
      continue;
    }
    kept.push_back(s[i]);
  }

  TokenSequence out;
  std::string run;
  auto flush = [&] {
    if (!run.empty()) out.tokens.push_back(std::move(run));
    run.clear();
  };
  for (char32_t c : kept) {
    if (is_cjk_ideograph(c)) {
      flush();
      std::string tok;
      utf8::append(tok, c);
      out.tokens.push_back(std::move(tok));
    } else if (char32_t f = fold_latin(c)) {
      utf8::append(run, f);
    } else {
      flush();
    }
  }
  flush();
  return out;
}

}  // namespace dialign
