#include "cspeech/generation.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <ctime>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "cspeech/random.hpp"
#include "cspeech/text_util.hpp"
#include "http.hpp"

namespace cspeech {
namespace {

using ojson = nlohmann::ordered_json;

constexpr std::string_view kFillerLexicon[] = {
    "people",  "respect", "everyone", "deserves", "dignity", "that",     "is",
    "not",     "true",    "we",       "should",   "listen",  "to",       "each",
    "other",   "many",    "of",       "them",     "are",     "our",      "neighbours",
    "and",     "friends", "hate",     "never",    "helps",   "anyone",   "facts",
    "show",    "the",     "opposite", "why",      "would",   "you",      "say",
    "this",    "let",     "us",       "talk",     "kindly"};

std::string utc_timestamp(std::chrono::system_clock::time_point tp) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

std::string flatten(const ComposedInput& input) {
  if (const auto* s = std::get_if<std::string>(&input)) return *s;
  std::string out;
  for (const auto& m : std::get<std::vector<ChatMessage>>(input)) {
    out += m.role;
    out += '\x1e';
    out += m.content;
    out += '\x1f';
  }
  return out;
}

ojson composed_to_json(const ComposedInput& input) {
  if (const auto* s = std::get_if<std::string>(&input)) return *s;
  ojson arr = ojson::array();
  for (const auto& m : std::get<std::vector<ChatMessage>>(input)) {
    arr.push_back({{"role", m.role}, {"content", m.content}});
  }
  return arr;
}

ComposedInput composed_from_json(const nlohmann::json& j) {
  if (j.is_string()) return j.get<std::string>();
  std::vector<ChatMessage> msgs;
  for (const auto& m : j) msgs.push_back({m.at("role"), m.at("content")});
  return msgs;
}

GenerationErrorKind parse_error_kind(std::string_view s) {
  for (auto k : {GenerationErrorKind::kTransport, GenerationErrorKind::kRefused,
                 GenerationErrorKind::kTimeout, GenerationErrorKind::kBadResponse}) {
    if (s == to_string(k)) return k;
  }
  throw DataError("unknown generation error kind: '" + std::string(s) + "'");
}

ojson request_to_json(const GenerationRequest& r) {
  ojson j;
  j["request_id"] = r.request_id;
  j["dataset"] = to_string(r.dataset);
  j["hate_speech"] = r.hate_speech;
  j["type_prompt"] = r.type_prompt ? ojson(*r.type_prompt) : ojson(nullptr);
  j["cs_type"] = r.cs_type ? ojson(to_string(*r.cs_type)) : ojson(nullptr);
  j["strategy"] = to_string(r.strategy);
  j["config"] = to_json(r.config);
  return j;
}

GenerationRequest request_from_json(const nlohmann::json& j) {
  GenerationRequest r;
  r.request_id = j.at("request_id").get<std::string>();
  r.dataset = parse_dataset_id(j.at("dataset").get<std::string>());
  r.hate_speech = j.at("hate_speech").get<std::string>();
  if (!j.at("type_prompt").is_null()) r.type_prompt = j.at("type_prompt").get<std::string>();
  if (!j.at("cs_type").is_null()) r.cs_type = parse_cs_type(j.at("cs_type").get<std::string>());
  r.strategy = parse_strategy(j.at("strategy").get<std::string>());
  r.config = decoding_config_from_json(j.at("config"));
  return r;
}

GenerationError http_failure_error(const detail::HttpResponse& res, std::size_t attempts) {
  if (res.failure == detail::HttpFailure::kTimeout) {
    return GenerationError(GenerationErrorKind::kTimeout, "request timed out: " + res.error_message,
                           attempts);
  }
  return GenerationError(GenerationErrorKind::kTransport,
                         "transport failure: " + res.error_message, attempts);
}

bool mentions_content_filter(const std::string& body) {
  return body.find("content_filter") != std::string::npos ||
         body.find("content_policy") != std::string::npos;
}

}  // namespace

void DecodingConfig::validate() const {
  if (!(top_p > 0.0 && top_p <= 1.0)) throw InvalidArgument("decoding: top_p must lie in (0, 1]");
  if (min_new_tokens > max_new_tokens) {
    throw InvalidArgument("decoding: min_new_tokens exceeds max_new_tokens");
  }
  if (!(temperature > 0.0)) throw InvalidArgument("decoding: temperature must be > 0");
  if (!(repetition_penalty > 0.0)) {
    throw InvalidArgument("decoding: repetition_penalty must be > 0");
  }
}

nlohmann::ordered_json to_json(const DecodingConfig& c) {
  ojson j;
  j["min_new_tokens"] = c.min_new_tokens;
  j["max_new_tokens"] = c.max_new_tokens;
  j["top_k"] = c.top_k;
  j["top_p"] = c.top_p;
  j["temperature"] = c.temperature;
  j["repetition_penalty"] = c.repetition_penalty;
  j["seed"] = c.seed;
  return j;
}

DecodingConfig decoding_config_from_json(const nlohmann::json& j) {
  DecodingConfig c;
  c.min_new_tokens = j.value("min_new_tokens", c.min_new_tokens);
  c.max_new_tokens = j.value("max_new_tokens", c.max_new_tokens);
  c.top_k = j.value("top_k", c.top_k);
  c.top_p = j.value("top_p", c.top_p);
  c.temperature = j.value("temperature", c.temperature);
  c.repetition_penalty = j.value("repetition_penalty", c.repetition_penalty);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::kCompletion: return "completion";
    case BackendKind::kChat: return "chat";
    case BackendKind::kMock: return "mock";
  }
  return "mock";
}

BackendKind parse_backend_kind(std::string_view name) {
  const auto n = to_lower_ascii(name);
  if (n == "completion") return BackendKind::kCompletion;
  if (n == "chat") return BackendKind::kChat;
  if (n == "mock") return BackendKind::kMock;
  throw InvalidArgument("unknown backend kind: '" + std::string(name) + "'");
}

void BackendDescriptor::validate() const {
  if (backend_id.empty()) throw InvalidArgument("backend: empty backend_id");
  if (kind == BackendKind::kMock && endpoint) {
    throw InvalidArgument("backend '" + backend_id + "': mock backends take no endpoint");
  }
  if (kind != BackendKind::kMock && (!endpoint || endpoint->empty())) {
    throw InvalidArgument("backend '" + backend_id + "': chat/completion backends need an endpoint");
  }
  if (max_attempts == 0) throw InvalidArgument("backend '" + backend_id + "': max_attempts is 0");
}

BackendDescriptor backend_descriptor_from_json(const nlohmann::json& j) {
  BackendDescriptor d;
  d.backend_id = j.at("id").get<std::string>();
  d.kind = parse_backend_kind(j.at("kind").get<std::string>());
  if (j.contains("endpoint") && !j.at("endpoint").is_null()) {
    d.endpoint = j.at("endpoint").get<std::string>();
  }
  d.model_name = j.value("model", std::string{});
  d.auth_env = j.value("auth_env", std::string{});
  d.extended_sampling = j.value("extended_sampling", false);
  d.max_attempts = j.value("max_attempts", d.max_attempts);
  d.timeout = std::chrono::milliseconds(j.value("timeout_ms", d.timeout.count()));
  d.backoff = std::chrono::milliseconds(j.value("backoff_ms", d.backoff.count()));
  d.validate();
  return d;
}

nlohmann::ordered_json to_json(const BackendDescriptor& d) {
  ojson j;
  j["id"] = d.backend_id;
  j["kind"] = to_string(d.kind);
  j["endpoint"] = d.endpoint ? ojson(*d.endpoint) : ojson(nullptr);
  j["model"] = d.model_name;
  j["auth_env"] = d.auth_env;
  j["extended_sampling"] = d.extended_sampling;
  j["max_attempts"] = d.max_attempts;
  j["timeout_ms"] = d.timeout.count();
  j["backoff_ms"] = d.backoff.count();
  return j;
}

void GenerationRequest::validate() const {
  config.validate();
  if (trim(hate_speech).empty()) throw InvalidArgument("generation request: empty hate speech");
  if ((strategy == PromptStrategy::kNone) == type_prompt.has_value()) {
    throw InvalidArgument("generation request: type_prompt must be present iff strategy is not none");
  }
}

ComposedInput compose_input(const GenerationRequest& request, BackendKind kind) {
  if (kind == BackendKind::kChat) {
    std::string user = request.hate_speech;
    if (request.type_prompt) {
      user += "\nstart the counterspeech with following \"" + *request.type_prompt + "\"";
    }
    return std::vector<ChatMessage>{{"system", std::string(kChatSystemMessage)},
                                    {"user", std::move(user)}};
  }
  std::string text = request.hate_speech;
  if (request.type_prompt) {
    text += '\n';
    text += *request.type_prompt;
  }
  return text;
}

std::string_view to_string(GenerationErrorKind k) {
  switch (k) {
    case GenerationErrorKind::kTransport: return "transport";
    case GenerationErrorKind::kRefused: return "refused";
    case GenerationErrorKind::kTimeout: return "timeout";
    case GenerationErrorKind::kBadResponse: return "bad_response";
  }
  return "transport";
}

// ---------------------------------------------------------------------------
// Mock

MockBackend::MockBackend(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {
  descriptor_.validate();
}

BackendReply MockBackend::complete(const ComposedInput& input, const DecodingConfig& config) {
  config.validate();
  const std::string flat = flatten(input);
  Rng rng(derive_seed(config.seed, fnv1a64(flat + '\x1d' + to_json(config).dump())));

  std::set<std::string> vocab;
  for (auto& t : split_whitespace(flat)) vocab.insert(to_lower_ascii(t));
  std::vector<std::string> pool(vocab.begin(), vocab.end());
  for (auto w : kFillerLexicon) pool.emplace_back(w);

  const std::size_t n =
      config.min_new_tokens + rng.below(config.max_new_tokens - config.min_new_tokens + 1);
  std::vector<std::string> words;
  words.reserve(n);
  for (std::size_t i = 0; i < n; ++i) words.push_back(pool[rng.below(pool.size())]);

  std::string text;
  // The type prompt, when present, is the text after the final newline.
  if (const auto* s = std::get_if<std::string>(&input)) {
    if (auto nl = s->rfind('\n'); nl != std::string::npos) text = s->substr(nl + 1) + " ";
  }
  text += join(words, " ");

  BackendReply reply;
  reply.text = std::move(text);
  reply.parameters.accepted = {"min_new_tokens", "max_new_tokens", "top_k", "top_p",
                               "temperature", "repetition_penalty", "seed"};
  return reply;
}

// ---------------------------------------------------------------------------
// HTTP

HttpBackend::HttpBackend(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {
  descriptor_.validate();
  if (descriptor_.kind == BackendKind::kMock) {
    throw InvalidArgument("HttpBackend cannot serve a mock descriptor");
  }
  detail::parse_url(*descriptor_.endpoint);
}

nlohmann::ordered_json HttpBackend::build_body(const ComposedInput& input,
                                               const DecodingConfig& config,
                                               ParameterReport* report) const {
  ojson body;
  body["model"] = descriptor_.model_name;
  if (descriptor_.kind == BackendKind::kChat) {
    body["messages"] = composed_to_json(input);
  } else {
    body["prompt"] = flatten(input);
  }
  body["max_tokens"] = config.max_new_tokens;
  body["temperature"] = config.temperature;
  body["top_p"] = config.top_p;
  body["seed"] = config.seed;
  ParameterReport params;
  params.accepted = {"max_new_tokens", "temperature", "top_p", "seed"};
  if (descriptor_.extended_sampling) {
    body["top_k"] = config.top_k;
    body["repetition_penalty"] = config.repetition_penalty;
    body["min_tokens"] = config.min_new_tokens;
    params.accepted.insert(params.accepted.end(), {"top_k", "repetition_penalty", "min_new_tokens"});
  } else {
    params.unsupported = {"top_k", "repetition_penalty", "min_new_tokens"};
  }
  if (report) *report = std::move(params);
  return body;
}

BackendReply HttpBackend::complete(const ComposedInput& input, const DecodingConfig& config) {
  config.validate();
  BackendReply reply;
  const std::string body = build_body(input, config, &reply.parameters).dump();
  const detail::Url url = detail::parse_url(*descriptor_.endpoint);
  const std::string path =
      descriptor_.kind == BackendKind::kChat ? "/chat/completions" : "/completions";

  detail::Headers headers;
  if (!descriptor_.auth_env.empty()) {
    if (const char* token = std::getenv(descriptor_.auth_env.c_str()); token && *token) {
      headers.emplace_back("Authorization", std::string("Bearer ") + token);
    }
  }

  auto delay = descriptor_.backoff;
  for (std::size_t attempt = 1;; ++attempt) {
    const auto res = detail::http_request("POST", url, path, body, headers, descriptor_.timeout);
    const bool retryable_status =
        res.failure == detail::HttpFailure::kNone &&
        (res.status == 408 || res.status == 429 || res.status >= 500);
    const bool retryable_failure = res.failure == detail::HttpFailure::kConnection ||
                                   res.failure == detail::HttpFailure::kOther;

    if (res.failure == detail::HttpFailure::kTimeout) throw http_failure_error(res, attempt);
    if (retryable_failure || retryable_status) {
      if (attempt >= descriptor_.max_attempts) {
        if (retryable_failure) throw http_failure_error(res, attempt);
        throw GenerationError(GenerationErrorKind::kTransport,
                              "HTTP " + std::to_string(res.status) + " after " +
                                  std::to_string(attempt) + " attempts",
                              attempt);
      }
      std::this_thread::sleep_for(delay);
      delay *= 2;
      continue;
    }

    reply.attempts = attempt;
    if (res.status >= 400) {
      if (mentions_content_filter(res.body)) {
        throw GenerationError(GenerationErrorKind::kRefused, "backend refused the request",
                              attempt);
      }
      throw GenerationError(GenerationErrorKind::kBadResponse,
                            "HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 200),
                            attempt);
    }

    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(res.body);
    } catch (const nlohmann::json::parse_error& e) {
      throw GenerationError(GenerationErrorKind::kBadResponse,
                            std::string("unparseable response: ") + e.what(), attempt);
    }
    try {
      const auto& choice = parsed.at("choices").at(0);
      if (choice.value("finish_reason", std::string{}) == "content_filter") {
        throw GenerationError(GenerationErrorKind::kRefused, "output blocked by content filter",
                              attempt);
      }
      if (descriptor_.kind == BackendKind::kChat) {
        const auto& message = choice.at("message");
        if (message.contains("refusal") && message.at("refusal").is_string()) {
          throw GenerationError(GenerationErrorKind::kRefused,
                                "backend refused: " + message.at("refusal").get<std::string>(),
                                attempt);
        }
        reply.text = message.at("content").is_null() ? std::string{}
                                                     : message.at("content").get<std::string>();
      } else {
        reply.text = choice.at("text").get<std::string>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw GenerationError(GenerationErrorKind::kBadResponse,
                            std::string("unexpected response shape: ") + e.what(), attempt);
    }
    if (reply.text.empty()) {
      throw GenerationError(GenerationErrorKind::kBadResponse, "backend returned empty output",
                            attempt);
    }
    return reply;
  }
}

std::unique_ptr<Backend> make_backend(const BackendDescriptor& descriptor) {
  if (descriptor.kind == BackendKind::kMock) return std::make_unique<MockBackend>(descriptor);
  return std::make_unique<HttpBackend>(descriptor);
}

// ---------------------------------------------------------------------------
// Records

nlohmann::ordered_json to_json(const GenerationRecord& r) {
  ojson j;
  j["schema"] = kGenerationRecordSchema;
  j["request"] = request_to_json(r.request);
  j["backend_id"] = r.backend_id;
  j["backend_kind"] = to_string(r.backend_kind);
  j["composed_input"] = composed_to_json(r.composed_input);
  j["output"] = r.output;
  j["parameters"] = {{"accepted", r.parameters.accepted},
                     {"unsupported", r.parameters.unsupported}};
  j["short_output"] = r.short_output;
  j["attempts"] = r.attempts;
  j["latency_ms"] = r.latency.count();
  j["timestamp"] = r.timestamp;
  j["error_kind"] = r.error_kind ? ojson(to_string(*r.error_kind)) : ojson(nullptr);
  j["error"] = r.error ? ojson(*r.error) : ojson(nullptr);
  return j;
}

GenerationRecord generation_record_from_json(const nlohmann::json& j) {
  try {
    const int schema = j.at("schema").get<int>();
    if (schema != kGenerationRecordSchema) {
      throw DataError("unsupported generation record schema " + std::to_string(schema));
    }
    GenerationRecord r;
    r.request = request_from_json(j.at("request"));
    r.backend_id = j.at("backend_id").get<std::string>();
    r.backend_kind = parse_backend_kind(j.at("backend_kind").get<std::string>());
    r.composed_input = composed_from_json(j.at("composed_input"));
    r.output = j.at("output").get<std::string>();
    r.parameters.accepted = j.at("parameters").at("accepted").get<std::vector<std::string>>();
    r.parameters.unsupported = j.at("parameters").at("unsupported").get<std::vector<std::string>>();
    r.short_output = j.value("short_output", false);
    r.attempts = j.value("attempts", std::size_t{0});
    r.latency = std::chrono::milliseconds(j.value("latency_ms", std::int64_t{0}));
    r.timestamp = j.value("timestamp", std::string{});
    if (!j.at("error_kind").is_null()) {
      r.error_kind = parse_error_kind(j.at("error_kind").get<std::string>());
    }
    if (!j.at("error").is_null()) r.error = j.at("error").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed generation record: ") + e.what());
  }
}

void write_records_jsonl(std::ostream& out, std::span<const GenerationRecord> records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<GenerationRecord> read_records_jsonl(std::istream& in) {
  std::vector<GenerationRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(generation_record_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw DataError("records line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

GenerationRecord generate(Backend& backend, const GenerationRequest& request) {
  request.validate();
  const auto& desc = backend.descriptor();
  GenerationRecord record;
  record.request = request;
  record.backend_id = desc.backend_id;
  record.backend_kind = desc.kind;
  record.composed_input = compose_input(request, desc.kind);

  const auto wall = std::chrono::system_clock::now();
  const auto started = std::chrono::steady_clock::now();
  BackendReply reply = backend.complete(record.composed_input, request.config);
  record.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - started);
  record.timestamp = utc_timestamp(wall);

  if (reply.text.empty()) {
    throw GenerationError(GenerationErrorKind::kBadResponse, "backend returned empty output",
                          reply.attempts);
  }
  record.output = std::move(reply.text);
  record.attempts = reply.attempts;
  const auto& unsupported = reply.parameters.unsupported;
  if (std::find(unsupported.begin(), unsupported.end(), "min_new_tokens") != unsupported.end() &&
      split_whitespace(record.output).size() < request.config.min_new_tokens) {
    record.short_output = true;
  }
  record.parameters = std::move(reply.parameters);
  return record;
}

BatchResult batch_generate(Backend& backend, std::span<const GenerationRequest> requests,
                           std::size_t parallel_width) {
  if (parallel_width == 0) throw InvalidArgument("batch_generate: parallel_width must be >= 1");
  BatchResult result;
  result.records.resize(requests.size());

  auto run_one = [&](std::size_t i) {
    try {
      result.records[i] = generate(backend, requests[i]);
    } catch (const std::exception& e) {
      GenerationRecord& r = result.records[i];
      r = GenerationRecord{};
      r.request = requests[i];
      r.backend_id = backend.descriptor().backend_id;
      r.backend_kind = backend.descriptor().kind;
      r.composed_input = compose_input(requests[i], r.backend_kind);
      r.timestamp = utc_timestamp(std::chrono::system_clock::now());
      r.error = e.what();
      if (const auto* ge = dynamic_cast<const GenerationError*>(&e)) {
        r.error_kind = ge->kind();
        r.attempts = ge->attempts();
      } else {
        r.error_kind = GenerationErrorKind::kBadResponse;
      }
    }
  };

  const std::size_t width = std::min(parallel_width, requests.size());
  if (width <= 1) {
    for (std::size_t i = 0; i < requests.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    workers.reserve(width);
    for (std::size_t w = 0; w < width; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < requests.size(); i = next.fetch_add(1)) {
          run_one(i);
        }
      });
    }
  }
  for (const auto& r : result.records) result.failures += r.ok() ? 0 : 1;
  return result;
}

}  // namespace cspeech
