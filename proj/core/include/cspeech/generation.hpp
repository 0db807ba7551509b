#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cspeech/error.hpp"
#include "cspeech/types.hpp"

namespace cspeech {

/// Sampling contract handed to every backend.
struct DecodingConfig {
  std::size_t min_new_tokens = 40;
  std::size_t max_new_tokens = 60;
  std::size_t top_k = 100;
  double top_p = 0.92;
  double temperature = 1.2;
  double repetition_penalty = 3.5;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument when an invariant does not hold.
  void validate() const;
};

nlohmann::ordered_json to_json(const DecodingConfig& c);
DecodingConfig decoding_config_from_json(const nlohmann::json& j);

enum class BackendKind { kCompletion, kChat, kMock };

std::string_view to_string(BackendKind k);
BackendKind parse_backend_kind(std::string_view name);

struct BackendDescriptor {
  std::string backend_id;
  BackendKind kind = BackendKind::kMock;
  std::optional<std::string> endpoint;  // base URL, e.g. https://api.example.com/v1
  std::string model_name;
  std::string auth_env;  // environment variable holding the bearer token
  /// The server accepts top_k, repetition_penalty and min_tokens in addition
  /// to the standard chat/completions sampling fields.
  bool extended_sampling = false;
  std::size_t max_attempts = 3;
  std::chrono::milliseconds timeout{60'000};
  std::chrono::milliseconds backoff{500};

  void validate() const;
};

BackendDescriptor backend_descriptor_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const BackendDescriptor& d);

struct GenerationRequest {
  std::string request_id;
  DatasetId dataset = DatasetId::kOther;
  std::string hate_speech;
  std::optional<std::string> type_prompt;
  std::optional<CsType> cs_type;
  PromptStrategy strategy = PromptStrategy::kNone;
  DecodingConfig config;

  /// type_prompt is present exactly when strategy is not NONE.
  void validate() const;
};

struct ChatMessage {
  std::string role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

using ComposedInput = std::variant<std::string, std::vector<ChatMessage>>;

inline constexpr std::string_view kChatSystemMessage =
    "you are a helpful assistant that generates counterspeech";

/// Completion and mock backends: hate speech, newline, then the type prompt so
/// that the model continues from it. Chat backends: a fixed system message and
/// a user message holding the hate speech plus, when prompted, the instruction
/// to start with the type prompt.
ComposedInput compose_input(const GenerationRequest& request, BackendKind kind);

enum class GenerationErrorKind { kTransport, kRefused, kTimeout, kBadResponse };

std::string_view to_string(GenerationErrorKind k);

class GenerationError : public Error {
public:
  GenerationError(GenerationErrorKind kind, const std::string& what, std::size_t attempts = 1)
      : Error(what), kind_(kind), attempts_(attempts) {}

  GenerationErrorKind kind() const { return kind_; }
  std::size_t attempts() const { return attempts_; }
  bool retryable() const { return kind_ == GenerationErrorKind::kTransport; }

private:
  GenerationErrorKind kind_;
  std::size_t attempts_;
};

/// Which decoding fields the backend honoured.
struct ParameterReport {
  std::vector<std::string> accepted;
  std::vector<std::string> unsupported;
};

struct BackendReply {
  std::string text;
  ParameterReport parameters;
  std::size_t attempts = 1;
};

class Backend {
public:
  virtual ~Backend() = default;
  virtual const BackendDescriptor& descriptor() const = 0;
  /// Throws GenerationError. Implementations must be safe to call concurrently.
  virtual BackendReply complete(const ComposedInput& input, const DecodingConfig& config) = 0;
};

/// Offline backend: the type prompt followed by a seeded sample of
/// min_new_tokens..max_new_tokens words drawn from the input vocabulary and a
/// fixed filler lexicon. Output depends only on (composed input, config).
class MockBackend final : public Backend {
public:
  explicit MockBackend(BackendDescriptor descriptor);

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  BackendReply complete(const ComposedInput& input, const DecodingConfig& config) override;

private:
  BackendDescriptor descriptor_;
};

/// OpenAI-style chat/completions client over HTTP(S).
class HttpBackend final : public Backend {
public:
  explicit HttpBackend(BackendDescriptor descriptor);

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  BackendReply complete(const ComposedInput& input, const DecodingConfig& config) override;

  /// Request body for the given input; exposed for inspection and tests.
  nlohmann::ordered_json build_body(const ComposedInput& input, const DecodingConfig& config,
                                    ParameterReport* report = nullptr) const;

private:
  BackendDescriptor descriptor_;
};

std::unique_ptr<Backend> make_backend(const BackendDescriptor& descriptor);

inline constexpr int kGenerationRecordSchema = 1;

struct GenerationRecord {
  GenerationRequest request;
  std::string backend_id;
  BackendKind backend_kind = BackendKind::kMock;
  ComposedInput composed_input;
  std::string output;  // verbatim
  ParameterReport parameters;
  /// Fewer than min_new_tokens words from a backend without a minimum-length control.
  bool short_output = false;
  std::size_t attempts = 0;
  std::chrono::milliseconds latency{0};
  std::string timestamp;  // ISO 8601 UTC
  std::optional<GenerationErrorKind> error_kind;
  std::optional<std::string> error;

  bool ok() const { return !error.has_value(); }
};

nlohmann::ordered_json to_json(const GenerationRecord& r);
GenerationRecord generation_record_from_json(const nlohmann::json& j);

void write_records_jsonl(std::ostream& out, std::span<const GenerationRecord> records);
std::vector<GenerationRecord> read_records_jsonl(std::istream& in);

/// Throws GenerationError; the request must validate.
GenerationRecord generate(Backend& backend, const GenerationRequest& request);

struct BatchResult {
  std::vector<GenerationRecord> records;  // request order
  std::size_t failures = 0;
};

/// At most parallel_width requests in flight. Failures become error records in
/// their request's position.
BatchResult batch_generate(Backend& backend, std::span<const GenerationRequest> requests,
                           std::size_t parallel_width);

}  // namespace cspeech
