#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cspeech/scorer_client.hpp"

namespace cspeech {

/// Deterministic stand-in for the scoring service. Values are pure functions
/// of (kind, text, context): classifier and engagement scores in [0, 1),
/// learned reference scores in [-2, 1), type distributions from a softmax over
/// hash-derived logits, and embeddings averaging per-token hash vectors.
class StubScorer {
public:
  static constexpr std::size_t kDefaultDim = 64;
  static constexpr std::string_view kVersion = "stub-1";

  struct Options {
    std::vector<ScoreKind> kinds{kAllScoreKinds.begin(), kAllScoreKinds.end()};
    std::size_t dim = kDefaultDim;
    std::string version{kVersion};
  };

  StubScorer() : StubScorer(Options{}) {}
  explicit StubScorer(Options options);

  static double value(ScoreKind kind, std::string_view text,
                      const std::optional<std::string>& context);
  static TypeDistribution type_distribution(std::string_view text,
                                            const std::optional<std::string>& context);
  static EmbeddingVector embedding(std::string_view text, std::size_t dim = kDefaultDim);

  Capabilities capabilities() const;

  /// Serves one wire request. Unknown routes give 404, malformed bodies and
  /// unadvertised kinds give 400.
  TransportResponse handle(std::string_view method, std::string_view path,
                           std::string_view body) const;

private:
  Options options_;
};

/// In-process transport that routes requests to a StubScorer.
class StubScorerTransport final : public ScorerTransport {
public:
  StubScorerTransport() = default;
  explicit StubScorerTransport(StubScorer scorer) : scorer_(std::move(scorer)) {}

  TransportResponse get(std::string_view path) override { return scorer_.handle("GET", path, {}); }
  TransportResponse post(std::string_view path, const std::string& body) override {
    return scorer_.handle("POST", path, body);
  }
  std::string describe() const override { return "in-process stub"; }

private:
  StubScorer scorer_;
};

}  // namespace cspeech
