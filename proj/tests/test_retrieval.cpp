#include <gtest/gtest.h>

#include <cmath>

#include "dialign/retrieval.hpp"
#include "support.hpp"

using namespace dialign;
using testing_support::random_unit_sequence;

namespace {

struct Fixture {
  Manifest manifest;
  std::map<UtteranceKey, EmbeddingSequence> entries;

  EmbeddingStore store() const { return EmbeddingStore(entries); }
};

/// `layout` lists (site_id, subgroup) pairs; every site gets sentences 1..n.
Manifest make_manifest(const std::vector<std::pair<std::string, std::string>>& layout, int n) {
  std::vector<Site> sites;
  std::vector<Utterance> utts;
  for (const auto& [id, group] : layout) {
    sites.push_back({id, id, Subgroup::parse(group)});
    for (int k = 1; k <= n; ++k) {
      Utterance u;
      u.site_id = id;
      u.sentence_id = k;
      u.audio_path = id + ".wav";
      utts.push_back(u);
    }
  }
  return Manifest(sites, utts);
}

EmbeddingSequence one_hot(std::size_t d, std::size_t hot) {
  EmbeddingSequence e(1, d);
  e.values[hot] = 1.0f;
  return e;
}

}  // namespace

TEST(RetrievePair, IdenticalEmbeddingsGivePerfectRecall) {
  SplitMix64 rng(1);
  Fixture f{make_manifest({{"a", "Wu"}, {"b", "Min"}}, 10), {}};
  for (int k = 1; k <= 10; ++k) {
    const auto e = random_unit_sequence(rng, 12, 16);
    f.entries[{"a", k}] = e;
    f.entries[{"b", k}] = e;
  }
  const auto r = retrieve_pair(f.store(), f.manifest, "a", "b");
  EXPECT_EQ(r.n_sentences, 10u);
  EXPECT_EQ(r.n_correct, 10u);
  EXPECT_EQ(r.recall, 1.0);
  for (const auto& s : r.per_sentence) EXPECT_EQ(s.retrieved_id, s.sentence_id);
}

TEST(RetrievePair, SwappedTargetsGiveZeroRecall) {
  Fixture f{make_manifest({{"a", "Wu"}, {"b", "Min"}}, 2), {}};
  f.entries[{"a", 1}] = one_hot(2, 0);
  f.entries[{"a", 2}] = one_hot(2, 1);
  f.entries[{"b", 1}] = one_hot(2, 1);
  f.entries[{"b", 2}] = one_hot(2, 0);
  const auto r = retrieve_pair(f.store(), f.manifest, "a", "b");
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_EQ(r.per_sentence[0].retrieved_id, 2);
  EXPECT_EQ(r.per_sentence[1].retrieved_id, 1);
}

TEST(RetrievePair, TiesGoToTheSmallestSentenceId) {
  Fixture f{make_manifest({{"a", "Wu"}, {"b", "Min"}}, 3), {}};
  for (int k = 1; k <= 3; ++k) {
    f.entries[{"a", k}] = one_hot(2, 0);
    f.entries[{"b", k}] = one_hot(2, 0);
  }
  const auto r = retrieve_pair(f.store(), f.manifest, "a", "b");
  for (const auto& s : r.per_sentence) EXPECT_EQ(s.retrieved_id, 1);
  EXPECT_EQ(r.n_correct, 1u);
}

TEST(RetrievePair, RandomEmbeddingsSitNearChance) {
  SplitMix64 rng(7);
  std::vector<std::pair<std::string, std::string>> layout;
  for (int s = 0; s < 6; ++s) layout.emplace_back("s" + std::to_string(s), s < 3 ? "Wu" : "Yue");
  Fixture f{make_manifest(layout, 50), {}};
  for (const auto& u : f.manifest.utterances()) f.entries[{u.site_id, u.sentence_id}] = random_unit_sequence(rng, 20, 64);
  const auto run = recall_matrix(f.store(), f.manifest);
  ASSERT_EQ(run.pairs.size(), 18u);
  double sum = 0.0;
  for (const auto& p : run.pairs) sum += p.recall;
  EXPECT_LT(sum / 18.0, 0.08);
}

TEST(RetrievePair, RejectsSelfPairsAndEmptyAlignment) {
  Fixture f{make_manifest({{"a", "Wu"}, {"b", "Min"}}, 2), {}};
  f.entries[{"a", 1}] = one_hot(2, 0);
  EXPECT_THROW(retrieve_pair(f.store(), f.manifest, "a", "a"), Error);
  EXPECT_THROW(retrieve_pair(f.store(), f.manifest, "a", "b"), Error);
  EXPECT_THROW(retrieve_pair(f.store(), f.manifest, "a", "nope"), Error);
}

TEST(RetrievePair, CloneSiteRetrievesPerfectly) {
  SplitMix64 rng(9);
  Fixture f{make_manifest({{"a", "Wu"}, {"a2", "Wu"}}, 8), {}};
  for (int k = 1; k <= 8; ++k) {
    const auto e = random_unit_sequence(rng, 6, 8);
    f.entries[{"a", k}] = e;
    f.entries[{"a2", k}] = e;
  }
  EXPECT_EQ(retrieve_pair(f.store(), f.manifest, "a", "a2").recall, 1.0);
}

TEST(RetrievePair, MissingEmbeddingsAreExcludedAndCounted) {
  SplitMix64 rng(10);
  Fixture f{make_manifest({{"a", "Wu"}, {"b", "Min"}}, 5), {}};
  for (int k = 1; k <= 5; ++k) {
    const auto e = random_unit_sequence(rng, 6, 8);
    if (k != 2) f.entries[{"a", k}] = e;
    if (k != 4) f.entries[{"b", k}] = e;
  }
  const auto r = retrieve_pair(f.store(), f.manifest, "a", "b");
  EXPECT_EQ(r.n_sentences, 3u);
  EXPECT_EQ(r.n_excluded, 2u);
  for (const auto& s : r.per_sentence) {
    EXPECT_NE(s.retrieved_id, 2);
    EXPECT_NE(s.retrieved_id, 4);
  }
}

TEST(RetrievePair, TopKCountsTheTrueSentenceWithinRank) {
  // Source sentence 2 prefers target 1 over target 2: wrong at k=1, right at k=2.
  Fixture f{make_manifest({{"a", "Wu"}, {"b", "Min"}}, 2), {}};
  f.entries[{"a", 1}] = EmbeddingSequence::from_rows({{1, 0}});
  f.entries[{"a", 2}] = EmbeddingSequence::from_rows({{0.8f, 0.6f}});
  f.entries[{"b", 1}] = EmbeddingSequence::from_rows({{1, 0}});
  f.entries[{"b", 2}] = EmbeddingSequence::from_rows({{0, 1}});
  EXPECT_EQ(retrieve_pair(f.store(), f.manifest, "a", "b", {.topk = 1}).recall, 0.5);
  EXPECT_EQ(retrieve_pair(f.store(), f.manifest, "a", "b", {.topk = 2}).recall, 1.0);
}

TEST(RetrievalProperty, DuplicatingTargetUnderLargerIdKeepsStrictWinner) {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 6;
    Fixture f{make_manifest({{"a", "Wu"}, {"b", "Min"}}, n + 1), {}};
    for (int k = 1; k <= n; ++k) {
      f.entries[{"a", k}] = random_unit_sequence(rng, 4, 6);
      f.entries[{"b", k}] = random_unit_sequence(rng, 4, 6);
    }
    // Sentence n+1 duplicates target sentence `dup` and has a dummy source.
    const int dup = 1 + static_cast<int>(rng.below(n));
    f.entries[{"b", n + 1}] = f.entries[{"b", dup}];
    f.entries[{"a", n + 1}] = random_unit_sequence(rng, 4, 6);

    Fixture before{make_manifest({{"a", "Wu"}, {"b", "Min"}}, n), {}};
    for (const auto& [k, e] : f.entries)
      if (k.sentence_id <= n) before.entries[k] = e;
    const auto r0 = retrieve_pair(before.store(), before.manifest, "a", "b");
    const auto r1 = retrieve_pair(f.store(), f.manifest, "a", "b");
    for (int s = 0; s < n; ++s) ASSERT_EQ(r1.per_sentence[s].retrieved_id, r0.per_sentence[s].retrieved_id);
  }
}

TEST(RetrievalProperty, DirectionMatters) {
  // Score matrix rows = source a, columns = target b:
  //   [0.9 0.8]   a->b: row maxima at (1, 1) -> one correct
  //   [0.95 0.1]  b->a: column maxima at (2, 1) -> none correct
  SitePairScores s;
  s.ids = {1, 2};
  s.f1 = {0.9, 0.8, 0.95, 0.1};
  EXPECT_EQ(decide_retrieval(s, "a", "b", 1).recall, 0.5);
  EXPECT_EQ(decide_retrieval(s, "b", "a", 1, true).recall, 0.0);

  // The same asymmetry arises from real embeddings.
  SplitMix64 rng(12);
  bool found = false;
  for (int trial = 0; trial < 200 && !found; ++trial) {
    Fixture f{make_manifest({{"a", "Wu"}, {"b", "Min"}}, 4), {}};
    for (const auto& u : f.manifest.utterances()) f.entries[{u.site_id, u.sentence_id}] = random_unit_sequence(rng, 2, 3);
    found = retrieve_pair(f.store(), f.manifest, "a", "b").recall != retrieve_pair(f.store(), f.manifest, "b", "a").recall;
  }
  EXPECT_TRUE(found);
}

TEST(RecallMatrixTest, BothDirectionsMatchDirectRetrieval) {
  SplitMix64 rng(13);
  Fixture f{make_manifest({{"a", "Wu"}, {"b", "Min"}, {"c", "Min"}, {"d", "Yue"}}, 7), {}};
  for (const auto& u : f.manifest.utterances()) f.entries[{u.site_id, u.sentence_id}] = random_unit_sequence(rng, 3, 4);
  const auto store = f.store();
  const auto run = recall_matrix(store, f.manifest, {.include_diagonal = true});
  EXPECT_EQ(run.pairs.size(), 12u);
  for (const auto& p : run.pairs) {
    const auto direct = retrieve_pair(store, f.manifest, p.source_site, p.target_site);
    ASSERT_EQ(p.n_correct, direct.n_correct) << p.source_site << "->" << p.target_site;
    for (std::size_t i = 0; i < p.per_sentence.size(); ++i) {
      ASSERT_EQ(p.per_sentence[i].retrieved_id, direct.per_sentence[i].retrieved_id);
      ASSERT_EQ(p.per_sentence[i].f1, direct.per_sentence[i].f1);
    }
  }
}

TEST(RecallMatrixTest, AllIdenticalEmbeddingsFillOffDiagonalWithOnes) {
  SplitMix64 rng(14);
  Fixture f{make_manifest({{"a", "Wu"}, {"b", "Wu"}, {"c", "Min"}, {"d", "Min"}, {"e", "Gan"}}, 6), {}};
  std::map<int, EmbeddingSequence> per_sentence;
  for (int k = 1; k <= 6; ++k) per_sentence[k] = random_unit_sequence(rng, 5, 8);
  for (const auto& u : f.manifest.utterances()) f.entries[{u.site_id, u.sentence_id}] = per_sentence[static_cast<int>(u.sentence_id)];
  const auto run = recall_matrix(f.store(), f.manifest);
  const auto& rm = run.matrix;
  ASSERT_EQ(rm.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) {
        EXPECT_FALSE(rm.cell(i, j));
        continue;
      }
      ASSERT_TRUE(rm.cell(i, j));
      EXPECT_EQ(rm.cell(i, j)->mean_recall, 1.0);
    }
  }
  // Wu has 2 sites, Min 2, Gan 1.
  EXPECT_EQ(rm.cell(0, 1)->n_pairs, 4u);
  EXPECT_EQ(rm.cell(2, 0)->n_pairs, 2u);
}

TEST(RecallMatrixTest, DiagonalCellsUseDistinctCityPairs) {
  SplitMix64 rng(15);
  Fixture f{make_manifest({{"a", "Wu"}, {"b", "Wu"}, {"c", "Wu"}, {"d", "Min"}}, 3), {}};
  for (const auto& u : f.manifest.utterances()) f.entries[{u.site_id, u.sentence_id}] = random_unit_sequence(rng, 3, 4);
  const auto run = recall_matrix(f.store(), f.manifest, {.include_diagonal = true});
  // Report order puts Min (index 0) before Wu (index 1).
  ASSERT_TRUE(run.matrix.cell(1, 1));
  EXPECT_EQ(run.matrix.cell(1, 1)->n_pairs, 6u);
  EXPECT_FALSE(run.matrix.cell(0, 0));  // a single Min site has no distinct pair
}

TEST(AggregateRecall, UnweightedMeanOfCityPairs) {
  const auto m = make_manifest({{"a", "Wu"}, {"b", "Wu"}, {"c", "Min"}, {"d", "Min"}}, 1);
  std::vector<PairRetrievalResult> pairs(2);
  pairs[0].source_site = "a";
  pairs[0].target_site = "c";
  pairs[0].recall = 1.0;
  pairs[1].source_site = "b";
  pairs[1].target_site = "c";
  pairs[1].recall = 0.5;
  const auto rm = aggregate_recall(m, pairs, false);
  ASSERT_TRUE(rm.cell(1, 0));
  EXPECT_EQ(rm.cell(1, 0)->mean_recall, 0.75);  // rows follow report order: Min before Wu
  EXPECT_EQ(rm.cell(1, 0)->n_pairs, 2u);
  EXPECT_FALSE(rm.cell(0, 1));
}

TEST(RecallMatrixTest, PairsWithoutSharedSentencesAreSkipped) {
  SplitMix64 rng(16);
  std::vector<Site> sites = {{"a", "a", Subgroup::parse("Wu")}, {"b", "b", Subgroup::parse("Min")},
                             {"c", "c", Subgroup::parse("Min")}};
  std::vector<Utterance> utts;
  auto add = [&](const std::string& s, int k) {
    Utterance u;
    u.site_id = s;
    u.sentence_id = k;
    u.audio_path = "x";
    utts.push_back(u);
  };
  add("a", 1), add("a", 2), add("b", 1), add("b", 2), add("c", 3);
  const Manifest m(sites, utts);
  std::map<UtteranceKey, EmbeddingSequence> e;
  for (const auto& u : utts) e[{u.site_id, u.sentence_id}] = random_unit_sequence(rng, 2, 3);
  const auto run = recall_matrix(EmbeddingStore(e), m);
  EXPECT_EQ(run.pairs.size(), 2u);
  EXPECT_EQ(run.skipped.size(), 2u);
  EXPECT_EQ(run.matrix.cell(0, 1)->n_pairs, 1u);
}

TEST(RecallMatrixTest, WorkerCountDoesNotChangeResults) {
  SplitMix64 rng(17);
  std::vector<std::pair<std::string, std::string>> layout;
  for (int s = 0; s < 6; ++s) layout.emplace_back("s" + std::to_string(s), s % 3 == 0 ? "Wu" : s % 3 == 1 ? "Min" : "Yue");
  Fixture f{make_manifest(layout, 9), {}};
  for (const auto& u : f.manifest.utterances()) f.entries[{u.site_id, u.sentence_id}] = random_unit_sequence(rng, 4, 8);
  const auto store = f.store();
  const auto serial = recall_matrix(store, f.manifest, {.workers = 1});
  const auto parallel = recall_matrix(store, f.manifest, {.workers = 4});
  ASSERT_EQ(serial.pairs.size(), parallel.pairs.size());
  for (std::size_t i = 0; i < serial.pairs.size(); ++i) {
    EXPECT_EQ(serial.pairs[i].source_site, parallel.pairs[i].source_site);
    EXPECT_EQ(serial.pairs[i].target_site, parallel.pairs[i].target_site);
    EXPECT_EQ(serial.pairs[i].recall, parallel.pairs[i].recall);
  }
}
