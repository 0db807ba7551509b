#include "cspeech/stub_scorer.hpp"

#include <algorithm>
#include <cmath>

#include "cspeech/random.hpp"
#include "cspeech/textmetrics.hpp"

namespace cspeech {
namespace {

double unit(std::uint64_t h) { return static_cast<double>(mix64(h) >> 11) * 0x1.0p-53; }

std::uint64_t item_hash(std::string_view kind, std::string_view text,
                        const std::optional<std::string>& context) {
  std::string key(kind);
  key += '\x1f';
  key += text;
  key += '\x1f';
  if (context) {
    key += '\x1e';
    key += *context;
  }
  return fnv1a64(key);
}

TransportResponse bad_request(const std::string& what) {
  nlohmann::ordered_json j;
  j["error"] = what;
  return {400, j.dump()};
}

}  // namespace

StubScorer::StubScorer(Options options) : options_(std::move(options)) {
  if (options_.dim == 0) throw InvalidArgument("stub scorer: dim must be >= 1");
}

double StubScorer::value(ScoreKind kind, std::string_view text,
                         const std::optional<std::string>& context) {
  const double u = unit(item_hash(to_string(kind), text, context));
  return kind == ScoreKind::kLearnedRef ? -2.0 + 3.0 * u : u;
}

TypeDistribution StubScorer::type_distribution(std::string_view text,
                                               const std::optional<std::string>& context) {
  const std::uint64_t h = item_hash(to_string(ScoreKind::kTypeDist), text, context);
  TypeDistribution logits{};
  double top = -1e300;
  for (std::size_t i = 0; i < kNumCsTypes; ++i) {
    logits[i] = 6.0 * unit(h + i) - 3.0;
    top = std::max(top, logits[i]);
  }
  double sum = 0.0;
  for (auto& l : logits) {
    l = std::exp(l - top);
    sum += l;
  }
  for (auto& l : logits) l /= sum;
  return logits;
}

EmbeddingVector StubScorer::embedding(std::string_view text, std::size_t dim) {
  EmbeddingVector v(dim, 0.0);
  const auto tokens = tokenize(text);
  if (tokens.empty()) return v;
  for (const auto& t : tokens) {
    const std::uint64_t h = fnv1a64(t);
    for (std::size_t d = 0; d < dim; ++d) v[d] += 2.0 * unit(h ^ mix64(d + 1)) - 1.0;
  }
  for (auto& x : v) x /= static_cast<double>(tokens.size());
  return v;
}

Capabilities StubScorer::capabilities() const {
  Capabilities caps;
  caps.kinds = options_.kinds;
  caps.embed_dim = options_.dim;
  for (auto k : options_.kinds) caps.versions[std::string(to_string(k))] = options_.version;
  caps.versions["embed"] = options_.version;
  return caps;
}

TransportResponse StubScorer::handle(std::string_view method, std::string_view path,
                                     std::string_view body) const {
  try {
    if (method == "GET" && path == "/v1/capabilities") {
      return {200, wire::encode_capabilities(capabilities())};
    }
    if (method == "POST" && path == "/v1/score") {
      const auto req = wire::decode_score_request(body);
      const auto kind = try_parse_score_kind(req.kind);
      if (!kind) return bad_request("unknown kind '" + req.kind + "'");
      if (std::find(options_.kinds.begin(), options_.kinds.end(), *kind) == options_.kinds.end()) {
        return bad_request("kind '" + req.kind + "' is not served");
      }
      std::vector<wire::ScoreResult> results;
      results.reserve(req.items.size());
      for (const auto& it : req.items) {
        wire::ScoreResult r;
        r.id = it.id;
        if (requires_context(*kind) && !it.context) {
          r.error = "kind '" + req.kind + "' needs a context";
        } else if (*kind == ScoreKind::kTypeDist) {
          r.distribution = type_distribution(it.text, it.context);
        } else {
          r.value = value(*kind, it.text, it.context);
        }
        results.push_back(std::move(r));
      }
      return {200, wire::encode_score_response(options_.version, results)};
    }
    if (method == "POST" && path == "/v1/embed") {
      const auto items = wire::decode_embed_request(body);
      std::vector<wire::EmbedResult> results;
      results.reserve(items.size());
      for (const auto& it : items) results.push_back({it.id, embedding(it.text, options_.dim)});
      return {200, wire::encode_embed_response(options_.dim, results)};
    }
    return {404, R"({"error":"not found"})"};
  } catch (const ScorerError& e) {
    return bad_request(e.what());
  }
}

}  // namespace cspeech
