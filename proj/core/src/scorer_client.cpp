#include "cspeech/scorer_client.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>
#include <unordered_map>

#include "http.hpp"

namespace cspeech {
namespace {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

[[noreturn]] void schema_error(const std::string& what) {
  throw ScorerError(ScorerErrorKind::kSchema, "scorer protocol violation: " + what);
}

json parse_body(std::string_view body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    schema_error(std::string("body is not JSON: ") + e.what());
  }
}

const json& field(const json& obj, const char* key, json::value_t type, const char* where) {
  if (!obj.is_object() || !obj.contains(key)) {
    schema_error(std::string(where) + " lacks \"" + key + "\"");
  }
  const json& v = obj.at(key);
  const bool ok = type == json::value_t::number_float ? v.is_number()
                  : type == json::value_t::number_unsigned ? v.is_number_unsigned()
                                                            : v.type() == type;
  if (!ok) schema_error(std::string(where) + ": \"" + key + "\" has the wrong type");
  return v;
}

std::string item_id(std::size_t i) { return "i" + std::to_string(i); }

bool unit_bounded(ScoreKind k) { return k != ScoreKind::kLearnedRef && k != ScoreKind::kTypeDist; }

}  // namespace

std::string_view to_string(ScorerErrorKind k) {
  switch (k) {
    case ScorerErrorKind::kTransport: return "transport";
    case ScorerErrorKind::kUnreachable: return "unreachable";
    case ScorerErrorKind::kSchema: return "schema";
    case ScorerErrorKind::kRejected: return "rejected";
    case ScorerErrorKind::kDimensionDrift: return "dimension_drift";
  }
  return "transport";
}

void ScoreRequest::validate() const {
  if (requires_context(kind) && !context) {
    throw InvalidArgument("score request: kind " + std::string(to_string(kind)) +
                          " needs a context text");
  }
  if (!requires_context(kind) && context) {
    throw InvalidArgument("score request: kind " + std::string(to_string(kind)) +
                          " takes no context");
  }
}

bool Capabilities::supports(ScoreKind k) const {
  return std::find(kinds.begin(), kinds.end(), k) != kinds.end();
}

namespace wire {

std::string encode_score_request(ScoreKind kind, std::span<const ScoreItem> items) {
  ojson j;
  j["kind"] = to_string(kind);
  ojson arr = ojson::array();
  for (const auto& it : items) {
    ojson o;
    o["id"] = it.id;
    o["text"] = it.text;
    o["context"] = it.context ? ojson(*it.context) : ojson(nullptr);
    arr.push_back(std::move(o));
  }
  j["items"] = std::move(arr);
  return j.dump();
}

std::string encode_score_response(const std::string& model_version,
                                  std::span<const ScoreResult> results) {
  ojson j;
  j["model_version"] = model_version;
  ojson arr = ojson::array();
  for (const auto& r : results) {
    ojson o;
    o["id"] = r.id;
    if (r.error) {
      o["error"] = *r.error;
    } else if (r.distribution) {
      ojson d;
      for (CsType t : kCsTypesAlphabetical) d[std::string(to_string(t))] = (*r.distribution)[index_of(t)];
      o["distribution"] = std::move(d);
    } else {
      o["value"] = r.value.value_or(0.0);
    }
    arr.push_back(std::move(o));
  }
  j["results"] = std::move(arr);
  return j.dump();
}

std::string encode_embed_request(std::span<const EmbedItem> items) {
  ojson arr = ojson::array();
  for (const auto& it : items) arr.push_back({{"id", it.id}, {"text", it.text}});
  ojson j;
  j["items"] = std::move(arr);
  return j.dump();
}

std::string encode_embed_response(std::size_t dim, std::span<const EmbedResult> results) {
  ojson j;
  j["dim"] = dim;
  ojson arr = ojson::array();
  for (const auto& r : results) arr.push_back({{"id", r.id}, {"vector", r.vector}});
  j["results"] = std::move(arr);
  return j.dump();
}

std::string encode_capabilities(const Capabilities& caps) {
  ojson j;
  ojson kinds = ojson::array();
  for (auto k : caps.kinds) kinds.push_back(to_string(k));
  j["kinds"] = std::move(kinds);
  j["embed_dim"] = caps.embed_dim;
  ojson versions = ojson::object();
  for (const auto& [k, v] : caps.versions) versions[k] = v;
  j["versions"] = std::move(versions);
  return j.dump();
}

ScoreRequestBody decode_score_request(std::string_view body) {
  const json j = parse_body(body);
  ScoreRequestBody out;
  out.kind = field(j, "kind", json::value_t::string, "score request").get<std::string>();
  for (const auto& it : field(j, "items", json::value_t::array, "score request")) {
    ScoreItem item;
    item.id = field(it, "id", json::value_t::string, "score item").get<std::string>();
    item.text = field(it, "text", json::value_t::string, "score item").get<std::string>();
    if (!it.contains("context")) schema_error("score item lacks \"context\"");
    if (it.at("context").is_string()) {
      item.context = it.at("context").get<std::string>();
    } else if (!it.at("context").is_null()) {
      schema_error("score item: \"context\" must be a string or null");
    }
    out.items.push_back(std::move(item));
  }
  return out;
}

ScoreResponseBody decode_score_response(std::string_view body, ScoreKind kind) {
  const json j = parse_body(body);
  ScoreResponseBody out;
  out.model_version =
      field(j, "model_version", json::value_t::string, "score response").get<std::string>();
  for (const auto& r : field(j, "results", json::value_t::array, "score response")) {
    ScoreResult res;
    res.id = field(r, "id", json::value_t::string, "score result").get<std::string>();
    if (r.contains("error")) {
      res.error = field(r, "error", json::value_t::string, "score result").get<std::string>();
    } else if (kind == ScoreKind::kTypeDist) {
      const auto& d = field(r, "distribution", json::value_t::object, "score result");
      if (d.size() != kNumCsTypes) schema_error("distribution must have exactly six types");
      TypeDistribution dist{};
      std::array<bool, kNumCsTypes> seen{};
      double sum = 0.0;
      for (const auto& [name, p] : d.items()) {
        CsType t;
        try {
          t = parse_cs_type(name);
        } catch (const InvalidArgument&) {
          schema_error("distribution has unknown type '" + name + "'");
        }
        if (!p.is_number() || seen[index_of(t)]) schema_error("bad distribution entry '" + name + "'");
        const double v = p.get<double>();
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
          schema_error("distribution entry '" + name + "' outside [0, 1]");
        }
        seen[index_of(t)] = true;
        dist[index_of(t)] = v;
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-6) schema_error("distribution does not sum to 1");
      res.distribution = dist;
    } else {
      const double v =
          field(r, "value", json::value_t::number_float, "score result").get<double>();
      if (!std::isfinite(v)) schema_error("non-finite value");
      if (unit_bounded(kind) && (v < 0.0 || v > 1.0)) {
        schema_error(std::string(to_string(kind)) + " value outside [0, 1]");
      }
      res.value = v;
    }
    out.results.push_back(std::move(res));
  }
  return out;
}

std::vector<EmbedItem> decode_embed_request(std::string_view body) {
  const json j = parse_body(body);
  std::vector<EmbedItem> out;
  for (const auto& it : field(j, "items", json::value_t::array, "embed request")) {
    out.push_back({field(it, "id", json::value_t::string, "embed item").get<std::string>(),
                   field(it, "text", json::value_t::string, "embed item").get<std::string>()});
  }
  return out;
}

EmbedResponseBody decode_embed_response(std::string_view body) {
  const json j = parse_body(body);
  EmbedResponseBody out;
  out.dim = field(j, "dim", json::value_t::number_unsigned, "embed response").get<std::size_t>();
  if (out.dim == 0) schema_error("embed response: dim is 0");
  for (const auto& r : field(j, "results", json::value_t::array, "embed response")) {
    EmbedResult res;
    res.id = field(r, "id", json::value_t::string, "embed result").get<std::string>();
    for (const auto& x : field(r, "vector", json::value_t::array, "embed result")) {
      if (!x.is_number()) schema_error("embed vector has a non-numeric entry");
      res.vector.push_back(x.get<double>());
    }
    if (res.vector.size() != out.dim) {
      schema_error("embed vector '" + res.id + "' has " + std::to_string(res.vector.size()) +
                   " entries, declared dim " + std::to_string(out.dim));
    }
    out.results.push_back(std::move(res));
  }
  return out;
}

Capabilities decode_capabilities(std::string_view body) {
  const json j = parse_body(body);
  Capabilities caps;
  for (const auto& k : field(j, "kinds", json::value_t::array, "capabilities")) {
    if (!k.is_string()) schema_error("capabilities: non-string kind");
    if (auto kind = try_parse_score_kind(k.get<std::string>())) {
      caps.kinds.push_back(*kind);
    } else {
      caps.unknown_kinds.push_back(k.get<std::string>());
    }
  }
  caps.embed_dim =
      field(j, "embed_dim", json::value_t::number_unsigned, "capabilities").get<std::size_t>();
  for (const auto& [k, v] : field(j, "versions", json::value_t::object, "capabilities").items()) {
    if (!v.is_string()) schema_error("capabilities: version of '" + k + "' is not a string");
    caps.versions[k] = v.get<std::string>();
  }
  return caps;
}

}  // namespace wire

HttpScorerTransport::HttpScorerTransport(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
  detail::parse_url(base_url_);
}

namespace {

TransportResponse http_exchange(const std::string& base_url, std::string_view method,
                                std::string_view path, const std::string& body,
                                std::chrono::milliseconds timeout) {
  const auto res =
      detail::http_request(method, detail::parse_url(base_url), path, body, {}, timeout);
  if (res.failure != detail::HttpFailure::kNone) {
    throw ScorerError(ScorerErrorKind::kTransport,
                      std::string(method) + " " + base_url + std::string(path) + ": " +
                          (res.failure == detail::HttpFailure::kTimeout ? "timed out: " : "") +
                          res.error_message);
  }
  return {res.status, res.body};
}

}  // namespace

TransportResponse HttpScorerTransport::get(std::string_view path) {
  return http_exchange(base_url_, "GET", path, {}, timeout_);
}

TransportResponse HttpScorerTransport::post(std::string_view path, const std::string& body) {
  return http_exchange(base_url_, "POST", path, body, timeout_);
}

ScorerClient::ScorerClient(std::shared_ptr<ScorerTransport> transport, ScorerOptions options)
    : transport_(std::move(transport)), options_(options) {
  if (!transport_) throw InvalidArgument("scorer client: null transport");
  if (options_.batch_size == 0) throw InvalidArgument("scorer client: batch_size must be >= 1");
  if (options_.max_attempts == 0) throw InvalidArgument("scorer client: max_attempts must be >= 1");
  if (options_.max_concurrency == 0) {
    throw InvalidArgument("scorer client: max_concurrency must be >= 1");
  }
}

ScorerClient ScorerClient::connect(const std::string& base_url, ScorerOptions options) {
  return ScorerClient(std::make_shared<HttpScorerTransport>(base_url, options.timeout), options);
}

TransportResponse ScorerClient::exchange(std::string_view method, std::string_view path,
                                         const std::string& body) {
  auto delay = options_.backoff;
  for (std::size_t attempt = 1;; ++attempt) {
    TransportResponse res;
    bool answered = false;
    std::string failure;
    try {
      res = method == "GET" ? transport_->get(path) : transport_->post(path, body);
      answered = true;
    } catch (const ScorerError& e) {
      if (e.kind() != ScorerErrorKind::kTransport) throw;
      failure = e.what();
    }
    if (answered && (res.status == 429 || res.status >= 500)) {
      failure = "HTTP " + std::to_string(res.status);
      answered = false;
    }
    if (answered) {
      if (res.status >= 400) {
        throw ScorerError(ScorerErrorKind::kRejected,
                          std::string(path) + " rejected with HTTP " + std::to_string(res.status) +
                              ": " + res.body.substr(0, 200));
      }
      if (res.status != 200) {
        schema_error(std::string(path) + " answered HTTP " + std::to_string(res.status));
      }
      return res;
    }
    if (attempt >= options_.max_attempts) {
      throw ScorerError(ScorerErrorKind::kTransport,
                        std::string(path) + " failed after " + std::to_string(attempt) +
                            " attempts: " + failure);
    }
    std::this_thread::sleep_for(delay);
    delay *= 2;
  }
}

Capabilities ScorerClient::capabilities() {
  try {
    const auto res = exchange("GET", "/v1/capabilities", {});
    return wire::decode_capabilities(res.body);
  } catch (const ScorerError& e) {
    if (e.kind() != ScorerErrorKind::kTransport) throw;
    throw ScorerError(ScorerErrorKind::kUnreachable,
                      "scorer unreachable at " + transport_->describe() + " (" + e.what() +
                          "); start the scorer service, point --scorer-url at it, or run with "
                          "--no-scorer");
  }
}

void ScorerClient::note_version(const std::string& key, const std::string& version) {
  std::lock_guard lock(mutex_);
  auto [it, inserted] = versions_.emplace(key, version);
  if (!inserted && it->second != version) {
    warnings_.push_back("model version for " + key + " changed from '" + it->second + "' to '" +
                        version + "' during the run");
    it->second = version;
  }
}

std::vector<ScoreResponse> ScorerClient::score_batch(ScoreKind kind,
                                                     std::span<const ScoreRequest> batch) {
  std::vector<wire::ScoreItem> items;
  items.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    items.push_back({item_id(i), batch[i].text, batch[i].context});
  }
  const auto res = exchange("POST", "/v1/score", wire::encode_score_request(kind, items));
  auto decoded = wire::decode_score_response(res.body, kind);
  if (decoded.results.size() != batch.size()) {
    schema_error("score response has " + std::to_string(decoded.results.size()) +
                 " results for " + std::to_string(batch.size()) + " items");
  }
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < decoded.results.size(); ++i) {
    if (!by_id.emplace(decoded.results[i].id, i).second) {
      schema_error("duplicate result id '" + decoded.results[i].id + "'");
    }
  }
  note_version(std::string(to_string(kind)), decoded.model_version);

  std::vector<ScoreResponse> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto it = by_id.find(item_id(i));
    if (it == by_id.end()) schema_error("no result for item '" + item_id(i) + "'");
    auto& r = decoded.results[it->second];
    out[i].kind = kind;
    out[i].value = r.value;
    out[i].distribution = r.distribution;
    out[i].error = std::move(r.error);
    out[i].model_version = decoded.model_version;
  }
  return out;
}

std::vector<ScoreResponse> ScorerClient::score(std::span<const ScoreRequest> requests) {
  if (requests.empty()) return {};
  const ScoreKind kind = requests.front().kind;
  for (const auto& r : requests) {
    if (r.kind != kind) throw InvalidArgument("score: a batch must hold a single kind");
    r.validate();
  }

  const std::size_t n_batches = (requests.size() + options_.batch_size - 1) / options_.batch_size;
  std::vector<std::vector<ScoreResponse>> parts(n_batches);
  auto run = [&](std::size_t b) {
    const std::size_t start = b * options_.batch_size;
    parts[b] = score_batch(kind, requests.subspan(start, std::min(options_.batch_size,
                                                                  requests.size() - start)));
  };

  const std::size_t width = std::min(options_.max_concurrency, n_batches);
  if (width <= 1) {
    for (std::size_t b = 0; b < n_batches; ++b) run(b);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    {
      std::vector<std::jthread> workers;
      for (std::size_t w = 0; w < width; ++w) {
        workers.emplace_back([&] {
          for (std::size_t b = next.fetch_add(1); b < n_batches; b = next.fetch_add(1)) {
            try {
              run(b);
            } catch (...) {
              std::lock_guard lock(error_mutex);
              if (!first_error) first_error = std::current_exception();
            }
          }
        });
      }
    }
    if (first_error) std::rethrow_exception(first_error);
  }

  std::vector<ScoreResponse> out;
  out.reserve(requests.size());
  for (auto& p : parts) {
    for (auto& r : p) out.push_back(std::move(r));
  }
  return out;
}

std::vector<EmbeddingVector> ScorerClient::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw InvalidArgument("embed: empty batch");
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += options_.batch_size) {
    const std::size_t len = std::min(options_.batch_size, texts.size() - start);
    std::vector<wire::EmbedItem> items;
    for (std::size_t i = 0; i < len; ++i) items.push_back({item_id(i), texts[start + i]});
    const auto res = exchange("POST", "/v1/embed", wire::encode_embed_request(items));
    auto decoded = wire::decode_embed_response(res.body);
    if (decoded.results.size() != len) {
      schema_error("embed response has " + std::to_string(decoded.results.size()) +
                   " results for " + std::to_string(len) + " items");
    }
    {
      std::lock_guard lock(mutex_);
      if (dim_ && *dim_ != decoded.dim) {
        throw ScorerError(ScorerErrorKind::kDimensionDrift,
                          "embedding dimension changed from " + std::to_string(*dim_) + " to " +
                              std::to_string(decoded.dim) + " within one session");
      }
      dim_ = decoded.dim;
    }
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < decoded.results.size(); ++i) {
      if (!by_id.emplace(decoded.results[i].id, i).second) {
        schema_error("duplicate embed id '" + decoded.results[i].id + "'");
      }
    }
    for (std::size_t i = 0; i < len; ++i) {
      const auto it = by_id.find(item_id(i));
      if (it == by_id.end()) schema_error("no embedding for item '" + item_id(i) + "'");
      out.push_back(std::move(decoded.results[it->second].vector));
    }
  }
  return out;
}

std::optional<std::size_t> ScorerClient::session_dim() const {
  std::lock_guard lock(mutex_);
  return dim_;
}

std::map<std::string, std::string> ScorerClient::observed_versions() const {
  std::lock_guard lock(mutex_);
  return versions_;
}

std::vector<std::string> ScorerClient::warnings() const {
  std::lock_guard lock(mutex_);
  return warnings_;
}

}  // namespace cspeech
