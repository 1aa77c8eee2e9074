#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dialign/corpus.hpp"
#include "dialign/embedding.hpp"
#include "dialign/error.hpp"
#include "dialign/parallel.hpp"
#include "dialign/seqsim.hpp"

namespace dialign {

struct SentenceMatch {
  std::int64_t sentence_id = 0;
  std::int64_t retrieved_id = 0;  // top-1 target sentence
  double f1 = 0.0;                // SeqSim of the top-1 target
  bool correct = false;           // true sentence within the top-k
};

struct PairRetrievalResult {
  std::string source_site;
  std::string target_site;
  std::size_t n_sentences = 0;
  std::size_t n_correct = 0;
  double recall = 0.0;
  std::size_t n_excluded = 0;  // aligned sentences dropped for missing embeddings
  std::vector<SentenceMatch> per_sentence;
};

struct RetrievalPolicy {
  /// Also compute same-subgroup cells (over distinct city pairs).
  bool include_diagonal = false;
  /// A source sentence counts as correct when its own ID is among the top-k.
  int topk = 1;
  SeqSimOptions seqsim{};
  unsigned workers = 0;  // 0 = all cores
};

/// SeqSim f1 between every usable aligned sentence of a source and a target
/// site. Row i / column j index `ids`.
struct SitePairScores {
  std::vector<std::int64_t> ids;
  std::size_t n_excluded = 0;
  std::vector<double> f1;  // ids.size() x ids.size(), row = source sentence

  double at(std::size_t i, std::size_t j) const { return f1[i * ids.size() + j]; }
};

inline SitePairScores score_site_pair(const EmbeddingStore& store, const Manifest& m, const std::string& source,
                                      const std::string& target, const SeqSimOptions& opts = {}) {
  SitePairScores out;
  const auto aligned = aligned_sentence_ids(m, source, target);
  std::vector<const EmbeddingSequence*> src, tgt;
  for (std::int64_t id : aligned) {
    const EmbeddingSequence* a = store.find(source, id);
    const EmbeddingSequence* b = store.find(target, id);
    if (!a || !b) {
      ++out.n_excluded;
      continue;
    }
    out.ids.push_back(id);
    src.push_back(a);
    tgt.push_back(b);
  }
  const std::size_t n = out.ids.size();
  out.f1.resize(n * n);
  SeqSimWorkspace ws;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out.f1[i * n + j] = seqsim_fast(*src[i], *tgt[j], opts, &ws).f1;
  return out;
}

/// Top-1 / top-k decisions from a score matrix. With `transpose`, rows of
/// `scores` are the targets, which yields the reverse direction for free
/// since SeqSim f1 is symmetric.
inline PairRetrievalResult decide_retrieval(const SitePairScores& scores, const std::string& source,
                                            const std::string& target, int topk, bool transpose = false) {
  PairRetrievalResult r;
  r.source_site = source;
  r.target_site = target;
  r.n_excluded = scores.n_excluded;
  const std::size_t n = scores.ids.size();
  r.n_sentences = n;
  const std::size_t k = static_cast<std::size_t>(std::max(topk, 1));
  auto score = [&](std::size_t s, std::size_t t) { return transpose ? scores.at(t, s) : scores.at(s, t); };
  for (std::size_t s = 0; s < n; ++s) {
    // ids are ascending, so keeping the first strict maximum breaks ties by
    // smallest sentence_id.
    std::size_t best = 0;
    for (std::size_t t = 1; t < n; ++t)
      if (score(s, t) > score(s, best)) best = t;
    // Rank of the true target under (score desc, id asc).
    const double own = score(s, s);
    std::size_t rank = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = score(s, t);
      if (v > own || (v == own && t < s)) ++rank;
    }
    SentenceMatch match{scores.ids[s], scores.ids[best], score(s, best), rank < k};
    r.n_correct += match.correct;
    r.per_sentence.push_back(match);
  }
  r.recall = n > 0 ? static_cast<double>(r.n_correct) / static_cast<double>(n) : 0.0;
  return r;
}

/// Retrieves every aligned source sentence among the aligned target
/// sentences. Utterances without embeddings on either side are excluded.
inline PairRetrievalResult retrieve_pair(const EmbeddingStore& store, const Manifest& m, const std::string& source,
                                         const std::string& target, const RetrievalPolicy& policy = {}) {
  m.site(source);
  m.site(target);
  if (source == target) throw validation_error("retrieve_pair: source and target are the same site '" + source + "'");
  SitePairScores scores = score_site_pair(store, m, source, target, policy.seqsim);
  if (scores.ids.empty()) {
    throw validation_error("retrieve_pair: no aligned sentences with embeddings between '" + source + "' and '" +
                           target + "' (" + std::to_string(scores.n_excluded) + " excluded)");
  }
  return decide_retrieval(scores, source, target, policy.topk);
}

// ---------------------------------------------------------------------------
// Subgroup aggregation
// ---------------------------------------------------------------------------

struct RecallCell {
  double mean_recall = 0.0;
  std::size_t n_pairs = 0;
};

struct RecallMatrix {
  std::vector<Subgroup> subgroups;
  /// Row-major subgroups x subgroups; empty optionals are omitted cells.
  std::vector<std::optional<RecallCell>> cells;
  bool include_diagonal = false;

  std::size_t size() const { return subgroups.size(); }
  const std::optional<RecallCell>& cell(std::size_t src, std::size_t tgt) const {
    return cells[src * subgroups.size() + tgt];
  }
};

struct SkippedPair {
  std::string source_site;
  std::string target_site;
  std::string reason;
};

struct RecallRun {
  RecallMatrix matrix;
  std::vector<PairRetrievalResult> pairs;  // ordered by (source, target) manifest order
  std::vector<SkippedPair> skipped;
  std::size_t total_excluded = 0;
};

/// Unweighted mean of city-pair recalls per (source subgroup, target
/// subgroup). Sums run in the order of `pairs`.
inline RecallMatrix aggregate_recall(const Manifest& m, const std::vector<PairRetrievalResult>& pairs,
                                     bool include_diagonal, std::vector<Subgroup> subgroups = {}) {
  RecallMatrix rm;
  rm.subgroups = subgroups.empty() ? manifest_subgroups(m) : std::move(subgroups);
  rm.include_diagonal = include_diagonal;
  const std::size_t n = rm.subgroups.size();
  rm.cells.assign(n * n, std::nullopt);
  auto index_of = [&](const Subgroup& g) -> std::optional<std::size_t> {
    auto it = std::find(rm.subgroups.begin(), rm.subgroups.end(), g);
    if (it == rm.subgroups.end()) return std::nullopt;
    return static_cast<std::size_t>(it - rm.subgroups.begin());
  };
  std::vector<double> sums(n * n, 0.0);
  std::vector<std::size_t> counts(n * n, 0);
  for (const auto& p : pairs) {
    const auto a = index_of(m.site(p.source_site).subgroup);
    const auto b = index_of(m.site(p.target_site).subgroup);
    if (!a || !b) continue;
    if (*a == *b && !include_diagonal) continue;
    sums[*a * n + *b] += p.recall;
    ++counts[*a * n + *b];
  }
  for (std::size_t i = 0; i < n * n; ++i)
    if (counts[i] > 0) rm.cells[i] = RecallCell{sums[i] / static_cast<double>(counts[i]), counts[i]};
  return rm;
}

/// Runs retrieval over every ordered pair of distinct cities whose subgroups
/// form a reported cell, then aggregates. Each unordered city pair is scored
/// once and decided in both directions. Pairs with no usable sentences are
/// skipped and listed, not fatal.
inline RecallRun recall_matrix(const EmbeddingStore& store, const Manifest& m, const RetrievalPolicy& policy = {}) {
  const auto& sites = m.sites();
  struct Job {
    std::size_t a, b;  // a < b
    bool forward = false, backward = false;
  };
  std::vector<Job> jobs;
  for (std::size_t a = 0; a < sites.size(); ++a) {
    for (std::size_t b = a + 1; b < sites.size(); ++b) {
      const bool same = sites[a].subgroup == sites[b].subgroup;
      if (same && !policy.include_diagonal) continue;
      jobs.push_back({a, b, true, true});
    }
  }

  struct JobResult {
    std::optional<PairRetrievalResult> forward, backward;
    std::optional<std::string> skip_reason;
    std::size_t excluded = 0;
  };
  std::vector<JobResult> results(jobs.size());
  parallel_for(jobs.size(), policy.workers, [&](std::size_t i) {
    const Job& job = jobs[i];
    const std::string& sa = sites[job.a].site_id;
    const std::string& sb = sites[job.b].site_id;
    SitePairScores scores = score_site_pair(store, m, sa, sb, policy.seqsim);
    JobResult& out = results[i];
    out.excluded = scores.n_excluded;
    if (scores.ids.empty()) {
      out.skip_reason = "no aligned sentences with embeddings (" + std::to_string(scores.n_excluded) + " excluded)";
      return;
    }
    if (job.forward) out.forward = decide_retrieval(scores, sa, sb, policy.topk, false);
    if (job.backward) out.backward = decide_retrieval(scores, sb, sa, policy.topk, true);
  });

  // Deterministic order: by source index, then target index.
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> order;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    order[{jobs[i].a, jobs[i].b}] = i;
    order[{jobs[i].b, jobs[i].a}] = i;
  }
  RecallRun run;
  for (const auto& [key, i] : order) {
    const bool forward = key.first == jobs[i].a;
    JobResult& r = results[i];
    if (r.skip_reason) {
      run.skipped.push_back({sites[key.first].site_id, sites[key.second].site_id, *r.skip_reason});
      continue;
    }
    auto& slot = forward ? r.forward : r.backward;
    if (slot) {
      run.total_excluded += slot->n_excluded;
      run.pairs.push_back(std::move(*slot));
    }
  }
  run.matrix = aggregate_recall(m, run.pairs, policy.include_diagonal);
  return run;
}

}  // namespace dialign
