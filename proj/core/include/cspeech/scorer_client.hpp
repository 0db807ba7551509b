#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cspeech/error.hpp"
#include "cspeech/kmeans.hpp"
#include "cspeech/prompt_engine.hpp"
#include "cspeech/types.hpp"

namespace cspeech {

enum class ScorerErrorKind {
  kTransport,       // connection failure or retryable HTTP status, after retries
  kUnreachable,     // capabilities probe failed
  kSchema,          // response does not follow the wire protocol
  kRejected,        // the service answered 4xx
  kDimensionDrift,  // embedding dimension changed within a session
};

std::string_view to_string(ScorerErrorKind k);

class ScorerError : public Error {
public:
  ScorerError(ScorerErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  ScorerErrorKind kind() const { return kind_; }

private:
  ScorerErrorKind kind_;
};

struct ScoreRequest {
  ScoreKind kind = ScoreKind::kToxicity;
  std::string text;
  std::optional<std::string> context;  // hate speech or reference
  std::string batch_id;

  /// Throws InvalidArgument unless context is present exactly when the kind needs one.
  void validate() const;
};

struct ScoreResponse {
  ScoreKind kind = ScoreKind::kToxicity;
  std::optional<double> value;                // every kind except TYPE_DIST
  std::optional<TypeDistribution> distribution;  // TYPE_DIST
  std::optional<std::string> error;           // per-item model failure
  std::string model_version;

  bool ok() const { return !error.has_value(); }
};

struct Capabilities {
  std::vector<ScoreKind> kinds;
  std::size_t embed_dim = 0;
  std::map<std::string, std::string> versions;  // kind name -> model version
  std::vector<std::string> unknown_kinds;       // advertised but not understood by this client

  bool supports(ScoreKind k) const;
};

// Wire encoding shared by the client and the in-process stub service. Keys are
// emitted in protocol order so that bodies compare byte-for-byte with fixtures.
namespace wire {

struct ScoreItem {
  std::string id;
  std::string text;
  std::optional<std::string> context;
};

struct ScoreResult {
  std::string id;
  std::optional<double> value;
  std::optional<TypeDistribution> distribution;
  std::optional<std::string> error;
};

struct EmbedItem {
  std::string id;
  std::string text;
};

struct EmbedResult {
  std::string id;
  EmbeddingVector vector;
};

std::string encode_score_request(ScoreKind kind, std::span<const ScoreItem> items);
std::string encode_score_response(const std::string& model_version,
                                  std::span<const ScoreResult> results);
std::string encode_embed_request(std::span<const EmbedItem> items);
std::string encode_embed_response(std::size_t dim, std::span<const EmbedResult> results);
std::string encode_capabilities(const Capabilities& caps);

// Decoders throw ScorerError(kSchema) on any deviation from the protocol.
struct ScoreRequestBody {
  std::string kind;  // raw; the service decides whether it knows it
  std::vector<ScoreItem> items;
};
ScoreRequestBody decode_score_request(std::string_view body);

struct ScoreResponseBody {
  std::string model_version;
  std::vector<ScoreResult> results;
};
/// Checks value ranges for the given kind and that distributions sum to 1.
ScoreResponseBody decode_score_response(std::string_view body, ScoreKind kind);

std::vector<EmbedItem> decode_embed_request(std::string_view body);

struct EmbedResponseBody {
  std::size_t dim = 0;
  std::vector<EmbedResult> results;
};
EmbedResponseBody decode_embed_response(std::string_view body);

Capabilities decode_capabilities(std::string_view body);

}  // namespace wire

struct TransportResponse {
  int status = 0;
  std::string body;
};

/// Raw request/response exchange with a scorer service.
class ScorerTransport {
public:
  virtual ~ScorerTransport() = default;
  /// Throws ScorerError(kTransport) when no response was obtained. Must be
  /// safe to call concurrently.
  virtual TransportResponse get(std::string_view path) = 0;
  virtual TransportResponse post(std::string_view path, const std::string& body) = 0;
  virtual std::string describe() const = 0;
};

class HttpScorerTransport final : public ScorerTransport {
public:
  HttpScorerTransport(std::string base_url, std::chrono::milliseconds timeout);

  TransportResponse get(std::string_view path) override;
  TransportResponse post(std::string_view path, const std::string& body) override;
  std::string describe() const override { return base_url_; }

private:
  std::string base_url_;
  std::chrono::milliseconds timeout_;
};

struct ScorerOptions {
  std::size_t batch_size = 32;
  std::size_t max_attempts = 3;
  std::chrono::milliseconds backoff{200};
  std::chrono::milliseconds timeout{60'000};  // per batch, HTTP transport only
  std::size_t max_concurrency = 1;            // batches in flight
};

class ScorerClient {
public:
  ScorerClient(std::shared_ptr<ScorerTransport> transport, ScorerOptions options = {});

  /// Convenience: HTTP transport for base_url (e.g. http://localhost:8080).
  static ScorerClient connect(const std::string& base_url, ScorerOptions options = {});

  /// Throws ScorerError(kUnreachable) with a remediation hint when the probe fails.
  Capabilities capabilities();

  /// One response per request, in request order. Requests must share one kind
  /// and validate; they are split into batches of options.batch_size.
  std::vector<ScoreResponse> score(std::span<const ScoreRequest> requests);

  /// One vector per text, in order; all of the session's dimension.
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts);

  /// Embedding dimension seen so far in this session.
  std::optional<std::size_t> session_dim() const;
  /// Latest model version observed per kind name (and "embed").
  std::map<std::string, std::string> observed_versions() const;
  /// Model-version changes observed during the session.
  std::vector<std::string> warnings() const;

  const ScorerOptions& options() const { return options_; }
  std::string describe() const { return transport_->describe(); }

private:
  TransportResponse exchange(std::string_view method, std::string_view path,
                             const std::string& body);
  std::vector<ScoreResponse> score_batch(ScoreKind kind, std::span<const ScoreRequest> batch);
  void note_version(const std::string& key, const std::string& version);

  std::shared_ptr<ScorerTransport> transport_;
  ScorerOptions options_;
  mutable std::mutex mutex_;
  std::optional<std::size_t> dim_;
  std::map<std::string, std::string> versions_;
  std::vector<std::string> warnings_;
};

/// Adapts a scorer client to the prompt engine's embedder interface.
class ScorerEmbedder final : public Embedder {
public:
  explicit ScorerEmbedder(ScorerClient& client) : client_(client) {}
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
    return client_.embed(texts);
  }

private:
  ScorerClient& client_;
};

}  // namespace cspeech
