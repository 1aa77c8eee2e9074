#pragma once

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialign/error.hpp"
#include "dialign/retrieval.hpp"

#ifndef DIALIGN_VERSION
#define DIALIGN_VERSION "0.1.0"
#endif

namespace dialign {

inline constexpr const char* kToolkitVersion = DIALIGN_VERSION;

struct ReportProvenance {
  std::string manifest_hash;
  std::string provider_id;
  bool normalized = true;
  std::string toolkit_version = kToolkitVersion;
  std::string config_hash;  // empty when not run from a config file
  int topk = 1;
};

/// Percentage with one decimal, e.g. 0.989 -> "98.9".
inline std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", fraction * 100.0);
  return buf;
}

inline constexpr const char* kOmittedCell = "--";
inline constexpr const char* kCornerLabel = "Source \\ Target";

namespace detail {

inline std::vector<std::string> provenance_lines(const ReportProvenance& p) {
  std::vector<std::string> lines = {
      "toolkit_version=" + p.toolkit_version,
      "manifest_hash=" + p.manifest_hash,
      "embedding_provider=" + p.provider_id,
      std::string("normalized=") + (p.normalized ? "true" : "false"),
      "topk=" + std::to_string(p.topk),
  };
  if (!p.config_hash.empty()) lines.push_back("config_hash=" + p.config_hash);
  return lines;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

/// CSV: `#` provenance lines, then the recall table (percent, 1 decimal,
/// "--" for omitted cells), a blank line, and the pair-count table.
inline std::string render_csv(const RecallMatrix& rm, const ReportProvenance& prov) {
  std::ostringstream os;
  for (const auto& line : detail::provenance_lines(prov)) os << "# " << line << '\n';
  const std::size_t n = rm.size();
  auto header = [&](const std::string& corner) {
    os << detail::csv_field(corner);
    for (const auto& g : rm.subgroups) os << ',' << detail::csv_field(g.display_name());
    os << '\n';
  };
  header(kCornerLabel);
  for (std::size_t i = 0; i < n; ++i) {
    os << detail::csv_field(rm.subgroups[i].display_name());
    for (std::size_t j = 0; j < n; ++j) {
      const auto& c = rm.cell(i, j);
      os << ',' << (c ? format_percent(c->mean_recall) : kOmittedCell);
    }
    os << '\n';
  }
  if (n == 0) return os.str();
  os << '\n';
  header("Pairs");
  for (std::size_t i = 0; i < n; ++i) {
    os << detail::csv_field(rm.subgroups[i].display_name());
    for (std::size_t j = 0; j < n; ++j) {
      const auto& c = rm.cell(i, j);
      os << ',' << (c ? std::to_string(c->n_pairs) : kOmittedCell);
    }
    os << '\n';
  }
  return os.str();
}

/// Markdown tables padded to aligned columns, readable as plain text.
inline std::string render_markdown(const RecallMatrix& rm, const ReportProvenance& prov,
                                   const std::vector<SkippedPair>& skipped = {}) {
  std::ostringstream os;
  os << "# Speech-to-speech retrieval recall (%)\n\n";
  for (const auto& line : detail::provenance_lines(prov)) os << "- " << line << '\n';
  os << '\n';
  const std::size_t n = rm.size();

  auto table = [&](const std::string& corner, auto&& cell_text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head = {corner};
    for (const auto& g : rm.subgroups) head.push_back(g.display_name());
    rows.push_back(head);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::string> r = {rm.subgroups[i].display_name()};
      for (std::size_t j = 0; j < n; ++j) r.push_back(cell_text(i, j));
      rows.push_back(r);
    }
    std::vector<std::size_t> width(head.size(), 3);
    for (const auto& r : rows)
      for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    auto emit = [&](const std::vector<std::string>& r) {
      os << '|';
      for (std::size_t c = 0; c < r.size(); ++c) {
        os << ' ' << r[c] << std::string(width[c] - r[c].size(), ' ') << " |";
      }
      os << '\n';
    };
    emit(rows[0]);
    os << '|';
    for (std::size_t c = 0; c < width.size(); ++c)
      os << (c == 0 ? std::string(width[c] + 2, '-') : ":" + std::string(width[c], '-') + ":") << '|';
    os << '\n';
    for (std::size_t r = 1; r < rows.size(); ++r) emit(rows[r]);
  };

  table(kCornerLabel, [&](std::size_t i, std::size_t j) {
    const auto& c = rm.cell(i, j);
    return c ? format_percent(c->mean_recall) : std::string(kOmittedCell);
  });
  if (n == 0) return os.str();
  os << "\nCity pairs per cell:\n\n";
  table("Pairs", [&](std::size_t i, std::size_t j) {
    const auto& c = rm.cell(i, j);
    return c ? std::to_string(c->n_pairs) : std::string(kOmittedCell);
  });
  if (!skipped.empty()) {
    os << "\nSkipped city pairs:\n\n";
    for (const auto& s : skipped) os << "- " << s.source_site << " -> " << s.target_site << ": " << s.reason << '\n';
  }
  return os.str();
}

/// Parsed form of the recall table in a rendered CSV.
struct ParsedRecallCsv {
  std::vector<std::string> provenance;
  std::vector<std::string> columns;
  std::vector<std::string> rows;
  std::vector<std::vector<std::optional<double>>> percent;  // rows x columns
};

inline ParsedRecallCsv parse_recall_csv(const std::string& text) {
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') cur += '"', ++i;
        else if (c == '"') quoted = false;
        else cur += c;
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        out.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    out.push_back(cur);
    return out;
  };
  ParsedRecallCsv out;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.rfind("# ", 0) == 0) {
      out.provenance.push_back(line.substr(2));
      continue;
    }
    if (line.empty()) {
      if (have_header) break;
      continue;
    }
    auto fields = split(line);
    if (!have_header) {
      out.columns.assign(fields.begin() + 1, fields.end());
      have_header = true;
      continue;
    }
    if (fields.size() != out.columns.size() + 1) throw validation_error("recall CSV: ragged row '" + line + "'");
    out.rows.push_back(fields[0]);
    std::vector<std::optional<double>> vals;
    for (std::size_t c = 1; c < fields.size(); ++c) {
      if (fields[c] == kOmittedCell) vals.emplace_back(std::nullopt);
      else vals.emplace_back(std::stod(fields[c]));
    }
    out.percent.push_back(std::move(vals));
  }
  if (!have_header) throw validation_error("recall CSV: missing header row");
  return out;
}

inline nlohmann::ordered_json pair_result_json(const PairRetrievalResult& r) {
  nlohmann::ordered_json j;
  j["source_site"] = r.source_site;
  j["target_site"] = r.target_site;
  j["n_sentences"] = r.n_sentences;
  j["n_correct"] = r.n_correct;
  j["recall"] = r.recall;
  j["n_excluded"] = r.n_excluded;
  auto& per = j["per_sentence"] = nlohmann::ordered_json::array();
  for (const auto& s : r.per_sentence) {
    per.push_back({{"sentence_id", s.sentence_id},
                   {"retrieved_sentence_id", s.retrieved_id},
                   {"f1", s.f1},
                   {"correct", s.correct}});
  }
  return j;
}

/// One JSON object per line, in the order given.
inline std::string render_pairs_jsonl(const std::vector<PairRetrievalResult>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += pair_result_json(p).dump();
    out += '\n';
  }
  return out;
}

}  // namespace dialign
