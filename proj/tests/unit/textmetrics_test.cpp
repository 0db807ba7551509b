#include <gtest/gtest.h>

#include "cspeech/error.hpp"
#include "cspeech/random.hpp"
#include "cspeech/textmetrics.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace cspeech;

TEST(Tokenize, LowercasesAndStripsEdgePunctuation) {
  EXPECT_EQ(tokenize("  Don't, STOP!  \"now\" ..."), (TokenSequence{"don't", "stop", "now"}));
  EXPECT_TRUE(tokenize("?! ,").empty());
}

TEST(Gleu, HandComputedCase) {
  const TokenSequence h = {"the", "cat", "sat"};
  const TokenSequence r = {"the", "cat", "ran"};
  // Matches: the, cat, "the cat" = 3. Hyp n-grams: 3 + 2 + 1 = 6 on both sides.
  EXPECT_DOUBLE_EQ(gleu(h, r), 0.5);
}

TEST(Gleu, EmptyInputs) {
  const TokenSequence empty;
  const TokenSequence one = {"a"};
  EXPECT_EQ(gleu(empty, empty), 1.0);
  EXPECT_EQ(gleu(empty, one), 0.0);
  EXPECT_EQ(gleu(one, empty), 0.0);
}

TEST(Gleu, ClipsRepeatedNgrams) {
  const TokenSequence h = {"a", "a", "a"};
  const TokenSequence r = {"a"};
  // One clipped unigram match; hyp has 3 + 2 + 1 n-grams, ref has 1.
  EXPECT_DOUBLE_EQ(gleu(h, r), 1.0 / 6.0);
}

TEST(GleuProperty, MatchesOracleAndBounds) {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const auto h = gen::tokens(rng, 10, 10);
    const auto r = gen::tokens(rng, 10, 10);
    const double g = gleu(h, r);
    ASSERT_NEAR(g, oracle::gleu(h, r), 1e-12);
    ASSERT_GE(g, 0.0);
    ASSERT_LE(g, 1.0);
    ASSERT_EQ(g, gleu(r, h));
  }
}

TEST(Stem, StripsCommonSuffixes) {
  EXPECT_EQ(light_stem("walking"), "walk");
  EXPECT_EQ(light_stem("talked"), "talk");
  EXPECT_EQ(light_stem("boxes"), "box");
  EXPECT_EQ(light_stem("cats"), "cat");
  EXPECT_EQ(light_stem("glass"), "glass");
  EXPECT_EQ(light_stem("is"), "is");
  EXPECT_EQ(light_stem("sing"), "sing");
}

TEST(Alignment, PrefersExactThenFewestChunks) {
  const TokenSequence h = {"the", "cat", "sat"};
  const TokenSequence r = {"cat", "the", "cat", "sat"};
  const auto a = align_unigrams(h, r);
  EXPECT_EQ(a.matches, 3u);
  EXPECT_EQ(a.exact_matches, 3u);
  EXPECT_EQ(a.chunks, 1u);
  EXPECT_TRUE(a.exact_search);
}

TEST(Alignment, StemMatchesCount) {
  const TokenSequence h = {"walking", "dogs"};
  const TokenSequence r = {"walked", "dog"};
  const auto a = align_unigrams(h, r);
  EXPECT_EQ(a.matches, 2u);
  EXPECT_EQ(a.exact_matches, 0u);
  EXPECT_EQ(a.chunks, 1u);
}

TEST(Meteor, IdenticalSentence) {
  const TokenSequence h = {"a", "b", "c", "d"};
  // F = 1, one chunk over four matches.
  EXPECT_NEAR(meteor_lite(h, h), 1.0 - 0.5 * std::pow(0.25, 3), 1e-12);
}

TEST(Meteor, NoMatchIsZero) {
  const TokenSequence h = {"x"};
  const TokenSequence r = {"y"};
  EXPECT_EQ(meteor_lite(h, r), 0.0);
}

TEST(MeteorProperty, MatchesEnumeratedAlignment) {
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const auto h = gen::tokens(rng, 7, 10);
    const auto r = gen::tokens(rng, 7, 10);
    const auto a = align_unigrams(h, r);
    const auto o = oracle::best_alignment(h, r);
    ASSERT_EQ(a.matches, o.matches);
    ASSERT_EQ(a.exact_matches, o.exact);
    ASSERT_EQ(a.chunks, o.chunks);
    ASSERT_NEAR(meteor_lite(h, r), oracle::meteor(h, r), 1e-12);
  }
}

TEST(Meteor, LongInputsFallBackToGreedy) {
  TokenSequence h;
  TokenSequence r;
  for (int i = 0; i < 120; ++i) {
    h.push_back(i % 2 ? "a" : "b");
    r.push_back(i % 3 ? "a" : "b");
  }
  const auto a = align_unigrams(h, r);
  EXPECT_GT(a.matches, 0u);
  const double m = meteor_lite(h, r);
  EXPECT_GE(m, 0.0);
  EXPECT_LE(m, 1.0);
}

TEST(Jaccard, SetSemantics) {
  const TokenSequence a = {"a", "a", "b"};
  const TokenSequence b = {"b", "c"};
  EXPECT_DOUBLE_EQ(jaccard(a, b), 1.0 / 3.0);
  EXPECT_EQ(jaccard(TokenSequence{}, TokenSequence{}), 1.0);
}

TEST(Novelty, EmptyCorpusThrows) {
  const TokenSequence h = {"a"};
  EXPECT_THROW(novelty(h, std::span<const TokenSequence>{}), InvalidArgument);
}

TEST(Diversity, NeedsTwoItems) {
  const std::vector<TokenSequence> one = {{"a"}};
  EXPECT_THROW(diversity(one), InvalidArgument);
  const std::vector<TokenSequence> two = {{"a", "b"}, {"b", "c"}};
  EXPECT_DOUBLE_EQ(diversity(two), 1.0 - 1.0 / 3.0);
}

TEST(DiversityProperty, MatchesOracle) {
  Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    std::vector<TokenSequence> items(2 + rng.below(6));
    for (auto& t : items) t = gen::tokens(rng, 8, 10);
    ASSERT_NEAR(diversity(items), oracle::diversity(items), 1e-12);
  }
}

TEST(Syllables, Counts) {
  EXPECT_EQ(count_syllables("cat"), 1u);
  EXPECT_EQ(count_syllables("make"), 1u);
  EXPECT_EQ(count_syllables("the"), 1u);
  EXPECT_EQ(count_syllables("reading"), 2u);
  EXPECT_EQ(count_syllables("rhythm"), 1u);
  EXPECT_EQ(count_syllables("psst"), 1u);
}

TEST(Flesch, ReferenceValues) {
  EXPECT_NEAR(flesch_reading_ease("The cat sat."), 119.19, 0.01);
  EXPECT_NEAR(flesch_reading_ease("Cat"), 121.22, 0.01);
  // Two sentences of two one-syllable words: 206.835 - 1.015 * 2 - 84.6.
  EXPECT_NEAR(flesch_reading_ease("Dogs run. Cats nap!"), 120.205, 1e-9);
  EXPECT_THROW(flesch_reading_ease(" ... "), InvalidArgument);
}
