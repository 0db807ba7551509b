#include <gtest/gtest.h>

#include "cspeech/scorer_client.hpp"
#include "cspeech/stub_scorer.hpp"
#include "generators.hpp"

using namespace cspeech;

TEST(StubScorer, ValuesAreDeterministicAndInRange) {
  Rng rng(31);
  for (int i = 0; i < 1000; ++i) {
    const auto text = gen::sentence(rng, 1, 8);
    const std::optional<std::string> ctx = gen::sentence(rng, 1, 4);
    for (auto k : kAllScoreKinds) {
      if (k == ScoreKind::kTypeDist) continue;
      const auto c = requires_context(k) ? ctx : std::nullopt;
      const double v = StubScorer::value(k, text, c);
      ASSERT_EQ(v, StubScorer::value(k, text, c));
      if (k == ScoreKind::kLearnedRef) {
        ASSERT_GE(v, -2.0);
        ASSERT_LT(v, 1.0);
      } else {
        ASSERT_GE(v, 0.0);
        ASSERT_LT(v, 1.0);
      }
    }
    const auto d = StubScorer::type_distribution(text, std::nullopt);
    double sum = 0.0;
    for (double p : d) {
      ASSERT_GT(p, 0.0);
      sum += p;
    }
    ASSERT_NEAR(sum, 1.0, 1e-12);
    const auto e = StubScorer::embedding(text, 16);
    ASSERT_EQ(e.size(), 16u);
    for (double x : e) {
      ASSERT_GE(x, -1.0);
      ASSERT_LE(x, 1.0);
    }
  }
}

TEST(StubScorer, ContextChangesTheValue) {
  EXPECT_NE(StubScorer::value(ScoreKind::kLearnedRef, "a", std::string("b")),
            StubScorer::value(ScoreKind::kLearnedRef, "a", std::string("c")));
  EXPECT_NE(StubScorer::value(ScoreKind::kToxicity, "a", std::nullopt),
            StubScorer::value(ScoreKind::kArgument, "a", std::nullopt));
}

TEST(StubScorer, EmbeddingAveragesTokens) {
  const auto a = StubScorer::embedding("alpha", 8);
  const auto b = StubScorer::embedding("beta", 8);
  const auto ab = StubScorer::embedding("Alpha beta!", 8);
  for (std::size_t d = 0; d < 8; ++d) EXPECT_NEAR(ab[d], (a[d] + b[d]) / 2.0, 1e-12);
  EXPECT_EQ(StubScorer::embedding("...", 4), EmbeddingVector(4, 0.0));
}

TEST(StubScorer, Routes) {
  StubScorer stub;
  EXPECT_EQ(stub.handle("GET", "/v1/nothing", "").status, 404);
  EXPECT_EQ(stub.handle("POST", "/v1/capabilities", "").status, 404);
  EXPECT_EQ(stub.handle("POST", "/v1/score", "{").status, 400);
  EXPECT_EQ(stub.handle("POST", "/v1/score", R"({"kind":"sentiment","items":[]})").status, 400);
  const auto missing = stub.handle(
      "POST", "/v1/score", R"({"kind":"learned_ref","items":[{"id":"i0","text":"x","context":null}]})");
  ASSERT_EQ(missing.status, 200);
  const auto decoded = wire::decode_score_response(missing.body, ScoreKind::kLearnedRef);
  EXPECT_TRUE(decoded.results.at(0).error.has_value());
  const auto caps = wire::decode_capabilities(stub.handle("GET", "/v1/capabilities", "").body);
  EXPECT_EQ(caps.kinds.size(), kAllScoreKinds.size());
  EXPECT_EQ(caps.embed_dim, 64u);
  EXPECT_EQ(caps.versions.at("embed"), "stub-1");
}

TEST(StubScorer, RejectsZeroDimension) {
  StubScorer::Options o;
  o.dim = 0;
  EXPECT_THROW(StubScorer{o}, InvalidArgument);
}
