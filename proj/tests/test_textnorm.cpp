#include <gtest/gtest.h>

#include <functional>
#include <sstream>

#include "dialign/cer.hpp"
#include "dialign/random.hpp"
#include "support.hpp"

using namespace dialign;

namespace {

using Tokens = std::vector<std::string>;

std::shared_ptr<const TradSimpTable> shipped_table() {
  static const auto t = std::make_shared<const TradSimpTable>(
      TradSimpTable::load(std::filesystem::path(DIALIGN_DATA_DIR) / "trad2simp.tsv"));
  return t;
}

NormalizationConfig shipped_config() {
  NormalizationConfig cfg;
  cfg.trad2simp = shipped_table();
  cfg.erhua_exceptions =
      NormalizationConfig::load_exceptions(std::filesystem::path(DIALIGN_DATA_DIR) / "erhua_exceptions.txt");
  return cfg;
}

Tokens norm(std::string_view s, const NormalizationConfig& cfg = {}) { return normalize_text(s, cfg).tokens; }

/// Exhaustive Levenshtein recursion, no memoization.
std::size_t brute_distance(const Tokens& a, std::size_t i, const Tokens& b, std::size_t j) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  return std::min({brute_distance(a, i + 1, b, j + 1) + (a[i] == b[j] ? 0 : 1), brute_distance(a, i + 1, b, j) + 1,
                   brute_distance(a, i, b, j + 1) + 1});
}

Tokens random_tokens(SplitMix64& rng, std::size_t max_len, int alphabet) {
  Tokens t(rng.below(max_len + 1));
  for (auto& s : t) s = std::string(1, static_cast<char>('a' + rng.below(alphabet)));
  return t;
}

TradSimpTable table_from(const std::string& text) {
  std::istringstream in(text);
  return TradSimpTable::parse(in);
}

}  // namespace

TEST(Normalize, TraditionalThanksBecomesSimplified) {
  EXPECT_EQ(norm("謝謝", shipped_config()), (Tokens{"谢", "谢"}));
}

TEST(Normalize, ErhuaAfterIdeographIsRemoved) {
  EXPECT_EQ(norm("花儿"), (Tokens{"花"}));
  EXPECT_EQ(norm("一点儿水"), (Tokens{"一", "点", "水"}));
}

TEST(Normalize, EmptyInput) { EXPECT_TRUE(norm("").empty()); }

TEST(Normalize, ErhuaExceptionsAndContext) {
  const auto cfg = shipped_config();
  EXPECT_EQ(norm("女儿", cfg), (Tokens{"女", "儿"}));
  EXPECT_EQ(norm("儿子", cfg), (Tokens{"儿", "子"}));
  EXPECT_EQ(norm("他的女儿在玩儿", cfg), (Tokens{"他", "的", "女", "儿", "在", "玩"}));
  EXPECT_EQ(norm("儿童"), (Tokens{"儿", "童"}));       // sentence-initial
  EXPECT_EQ(norm("ok儿"), (Tokens{"ok", "儿"}));       // after Latin
  EXPECT_EQ(norm("花，儿"), (Tokens{"花", "儿"}));     // after punctuation
  NormalizationConfig off;
  off.erhua_enabled = false;
  EXPECT_EQ(norm("花儿", off), (Tokens{"花", "儿"}));
}

TEST(Normalize, TraditionalErhuaIsMappedBeforeRemoval) {
  // 兒 is the traditional form of 儿.
  EXPECT_EQ(norm("花兒", shipped_config()), (Tokens{"花"}));
}

TEST(Normalize, StripsPunctuationAndLowercasesLatin) {
  EXPECT_EQ(norm("你好，World！ OK?"), (Tokens{"你", "好", "world", "ok"}));
  EXPECT_EQ(norm("ＡＢＣ１２３"), (Tokens{"abc123"}));
  EXPECT_EQ(norm("打call了"), (Tokens{"打", "call", "了"}));
  EXPECT_EQ(norm("  \t\n"), Tokens{});
  EXPECT_EQ(norm("《三体》·刘慈欣"), (Tokens{"三", "体", "刘", "慈", "欣"}));
}

TEST(Normalize, InvalidUtf8NeverThrows) {
  EXPECT_EQ(norm(std::string("a\xff\xfe" "b")), (Tokens{"a", "b"}));
  EXPECT_NO_THROW(norm(std::string("\xe4\xbd", 2)));
}

TEST(Normalize, TokensConcatenateToTheNormalizedString) {
  const auto t = normalize_text("Hello，世界 2024年");
  EXPECT_EQ(t.joined(), "hello 世 界 2024 年");
}

TEST(NormalizeProperty, IdempotentOnFuzzCorpus) {
  const auto cfg = shipped_config();
  const std::vector<std::string> pieces = {"謝", "谢", "兒", "儿", "女", "花", "點", "点", "子", "國", "国", "a", "B",
                                           "z", "7", "Ａ", "９", "é", "Ö", " ", "\t", "，", "。", "!", "?", "-",
                                           "《", "》", "😀", "〇", "\xff", "儿子", "女儿", "𠀀"};
  SplitMix64 rng(31);
  for (int i = 0; i < 1000; ++i) {
    std::string s;
    const std::size_t len = rng.below(16);
    for (std::size_t k = 0; k < len; ++k) s += pieces[rng.below(pieces.size())];
    const TokenSequence once = normalize_text(s, cfg);
    const TokenSequence twice = normalize_text(once.joined(), cfg);
    ASSERT_EQ(twice, once) << "input: " << s;
  }
}

TEST(TradSimp, ShippedTableLoads) {
  const auto t = shipped_table();
  EXPECT_GT(t->size(), 2000u);
  EXPECT_EQ(t->map(U'謝'), U'谢');
  EXPECT_EQ(t->map(U'谢'), U'谢');
  EXPECT_EQ(t->map(U'a'), U'a');
  EXPECT_EQ(t->hash().size(), 16u);
}

TEST(TradSimp, RejectsBadTables) {
  EXPECT_THROW(table_from("謝謝\t谢\n"), Error);          // one-to-many source
  EXPECT_THROW(table_from("謝\t谢谢\n"), Error);          // one-to-many target
  EXPECT_THROW(table_from("謝\t谢\n謝\t射\n"), Error);    // conflicting
  EXPECT_THROW(table_from("甲\t乙\n乙\t丙\n"), Error);    // chained
  EXPECT_THROW(table_from("no tab here\n"), Error);
  EXPECT_NO_THROW(table_from("# comment\n\n謝\t谢\n謝\t谢\n"));
}

TEST(TradSimp, HashTracksContent) {
  EXPECT_EQ(table_from("謝\t谢\n").hash(), table_from("# c\n謝\t谢\n").hash());
  EXPECT_NE(table_from("謝\t谢\n").hash(), table_from("國\t国\n").hash());
}

TEST(Cer, IdenticalIsZero) {
  const auto t = normalize_text("今天天气很好");
  EXPECT_EQ(cer(t, t), 0.0);
}

TEST(Cer, OneSubstitutionInThree) {
  EXPECT_DOUBLE_EQ(cer(TokenSequence{{"a", "b", "c"}}, TokenSequence{{"a", "b", "d"}}), 1.0 / 3.0);
}

TEST(Cer, CanExceedOne) {
  EXPECT_DOUBLE_EQ(cer(TokenSequence{{"a", "b", "c"}}, TokenSequence{{"d", "e", "f", "g", "h", "i", "j"}}), 7.0 / 3.0);
}

TEST(Cer, EmptyReferenceIsAnError) { EXPECT_THROW(cer(TokenSequence{}, TokenSequence{{"a"}}), Error); }

TEST(CorpusCerTest, MicroAverage) {
  // Distances 1 and 2 over reference lengths 4 and 6.
  const auto r = corpus_cer({"一二三四", "一二三四五六"}, {"一二三五", "一二三四"});
  EXPECT_EQ(r.total_edits, 3u);
  EXPECT_EQ(r.total_ref_tokens, 10u);
  EXPECT_DOUBLE_EQ(r.overall, 0.3);
  ASSERT_EQ(r.per_utterance.size(), 2u);
  EXPECT_DOUBLE_EQ(r.per_utterance[0].rate(), 0.25);
}

TEST(CorpusCerTest, AllIdenticalIsZero) {
  EXPECT_EQ(corpus_cer({"你好", "再见 OK"}, {"你好", "再见 OK"}).overall, 0.0);
}

TEST(CorpusCerTest, LengthMismatchIsAnError) { EXPECT_THROW(corpus_cer({"a", "b"}, {"a"}), Error); }

TEST(CorpusCerTest, NormalizedEqualPairsContributeNothing) {
  const auto cfg = shipped_config();
  const auto r = corpus_cer({"謝謝你！", "花儿 Red"}, {"谢谢 你", "花 red。"}, cfg);
  EXPECT_EQ(r.total_edits, 0u);
}

TEST(EditDistanceProperty, MatchesExhaustiveRecursion) {
  SplitMix64 rng(41);
  for (int i = 0; i < 200; ++i) {
    const Tokens a = random_tokens(rng, 8, 4);
    const Tokens b = random_tokens(rng, 8, 4);
    ASSERT_EQ(edit_distance(a, b), brute_distance(a, 0, b, 0));
  }
}

TEST(EditDistanceProperty, SymmetricWithTriangleInequality) {
  SplitMix64 rng(42);
  for (int i = 0; i < 300; ++i) {
    const Tokens a = random_tokens(rng, 10, 3);
    const Tokens b = random_tokens(rng, 10, 3);
    const Tokens c = random_tokens(rng, 10, 3);
    ASSERT_EQ(edit_distance(a, a), 0u);
    ASSERT_EQ(edit_distance(a, b), edit_distance(b, a));
    ASSERT_LE(edit_distance(a, c), edit_distance(a, b) + edit_distance(b, c));
  }
}

TEST(KeyedText, ReadsTabSeparatedLines) {
  testing_support::TempDir dir;
  testing_support::write_text(dir / "r.tsv", "u1\t你好\r\nu2\n\nu3\ta\tb\n");
  const auto rows = read_keyed_text(dir / "r.tsv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], (std::pair<std::string, std::string>{"u1", "你好"}));
  EXPECT_EQ(rows[1].second, "");
  EXPECT_EQ(rows[2].second, "a\tb");
}
