#include <gtest/gtest.h>

#include <deque>
#include <fstream>
#include <functional>
#include <mutex>

#include "cspeech/error.hpp"
#include "cspeech/scorer_client.hpp"
#include "cspeech/stub_scorer.hpp"
#include "cspeech/text_util.hpp"
#include "loopback.hpp"

using namespace cspeech;
using namespace std::chrono_literals;

namespace {

std::string fixture(const std::string& name) {
  std::ifstream in(std::string(CSPEECH_WIRE_FIXTURES_DIR) + "/" + name, std::ios::binary);
  EXPECT_TRUE(in.good()) << name;
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return std::string(trim(s));
}

/// Answers each request from a queue of scripted responses; an empty status
/// slot means "throw a transport error".
class ScriptedTransport final : public ScorerTransport {
public:
  using Handler = std::function<TransportResponse(std::string_view, const std::string&)>;

  void push(int status, std::string body) { script_.push_back({status, std::move(body)}); }
  void push_failure() { script_.push_back({-1, {}}); }

  TransportResponse get(std::string_view path) override { return next(path, {}); }
  TransportResponse post(std::string_view path, const std::string& body) override {
    return next(path, body);
  }
  std::string describe() const override { return "scripted"; }

  std::vector<std::string> bodies;
  std::vector<std::string> paths;

private:
  TransportResponse next(std::string_view path, const std::string& body) {
    std::lock_guard lock(mu_);
    paths.emplace_back(path);
    bodies.push_back(body);
    if (script_.empty()) throw std::runtime_error("script exhausted");
    auto r = script_.front();
    script_.pop_front();
    if (r.status < 0) throw ScorerError(ScorerErrorKind::kTransport, "connection reset");
    return r;
  }

  std::mutex mu_;
  std::deque<TransportResponse> script_;
};

ScorerOptions fast_options() {
  ScorerOptions o;
  o.backoff = 1ms;
  o.max_attempts = 3;
  return o;
}

std::vector<ScoreRequest> tox_requests(std::size_t n) {
  std::vector<ScoreRequest> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({ScoreKind::kToxicity, "text number " + std::to_string(i), std::nullopt, "b"});
  }
  return out;
}

ScorerErrorKind error_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const ScorerError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected ScorerError";
  return ScorerErrorKind::kTransport;
}

}  // namespace

// ---------------------------------------------------------------------------
// Golden wire fixtures

TEST(WireFixtures, ScoreRequest) {
  const std::vector<wire::ScoreItem> items = {{"i0", "You are wrong.", std::nullopt},
                                              {"i1", "Facts matter.", std::nullopt}};
  EXPECT_EQ(wire::encode_score_request(ScoreKind::kToxicity, items), fixture("score_request.json"));
  const auto decoded = wire::decode_score_request(fixture("score_request.json"));
  EXPECT_EQ(decoded.kind, "toxicity");
  ASSERT_EQ(decoded.items.size(), 2u);
  EXPECT_EQ(decoded.items[1].text, "Facts matter.");
  EXPECT_FALSE(decoded.items[1].context.has_value());

  const std::vector<wire::ScoreItem> ctx = {{"i0", "Not all of them.", "Most are honest workers."}};
  EXPECT_EQ(wire::encode_score_request(ScoreKind::kLearnedRef, ctx),
            fixture("score_request_context.json"));
}

TEST(WireFixtures, ScoreResponse) {
  const auto body = fixture("score_response.json");
  const auto decoded = wire::decode_score_response(body, ScoreKind::kToxicity);
  EXPECT_EQ(decoded.model_version, "tox-2");
  ASSERT_EQ(decoded.results.size(), 2u);
  EXPECT_NEAR(*decoded.results[0].value, 0.25, 1e-9);
  EXPECT_EQ(*decoded.results[1].error, "text too long");
  EXPECT_EQ(wire::encode_score_response(decoded.model_version, decoded.results), body);
}

TEST(WireFixtures, TypeDistribution) {
  const auto body = fixture("score_response_type_dist.json");
  const auto decoded = wire::decode_score_response(body, ScoreKind::kTypeDist);
  const auto& d = *decoded.results.at(0).distribution;
  EXPECT_NEAR(d[index_of(CsType::kFacts)], 0.5, 1e-9);
  EXPECT_NEAR(d[index_of(CsType::kHumor)], 0.0625, 1e-9);
  EXPECT_EQ(wire::encode_score_response(decoded.model_version, decoded.results), body);
}

TEST(WireFixtures, Embed) {
  const std::vector<wire::EmbedItem> items = {{"i0", "hello world"}, {"i1", "second text"}};
  EXPECT_EQ(wire::encode_embed_request(items), fixture("embed_request.json"));
  const auto body = fixture("embed_response.json");
  const auto decoded = wire::decode_embed_response(body);
  EXPECT_EQ(decoded.dim, 3u);
  EXPECT_EQ(decoded.results[1].vector, (EmbeddingVector{0.0, 0.75, -1.0}));
  EXPECT_EQ(wire::encode_embed_response(decoded.dim, decoded.results), body);
}

TEST(WireFixtures, Capabilities) {
  const auto body = fixture("capabilities.json");
  const auto caps = wire::decode_capabilities(body);
  EXPECT_EQ(caps.kinds, (std::vector<ScoreKind>{ScoreKind::kCounterspeech, ScoreKind::kToxicity,
                                                ScoreKind::kTypeDist}));
  EXPECT_EQ(caps.embed_dim, 64u);
  EXPECT_EQ(caps.versions.at("embed"), "emb-1");
  EXPECT_TRUE(caps.supports(ScoreKind::kToxicity));
  EXPECT_FALSE(caps.supports(ScoreKind::kArgument));
  EXPECT_EQ(wire::encode_capabilities(caps), body);
}

TEST(WireDecode, RejectsProtocolViolations) {
  auto schema = [](const std::function<void()>& f) { EXPECT_EQ(error_kind(f), ScorerErrorKind::kSchema); };
  schema([] { wire::decode_score_response("nope", ScoreKind::kToxicity); });
  schema([] { wire::decode_score_response(R"({"results":[]})", ScoreKind::kToxicity); });
  schema([] { wire::decode_score_response(R"({"model_version":"v","results":[{"id":"i0","value":"0.5"}]})", ScoreKind::kToxicity); });
  schema([] { wire::decode_score_response(R"({"model_version":"v","results":[{"id":"i0","value":1.5}]})", ScoreKind::kToxicity); });
  schema([] { wire::decode_score_response(R"({"model_version":"v","results":[{"id":"i0","distribution":{"facts":1.0}}]})", ScoreKind::kTypeDist); });
  schema([] {
    wire::decode_score_response(
        R"({"model_version":"v","results":[{"id":"i0","distribution":{"affiliation":0.5,"denouncing":0.5,"facts":0.5,"humor":0,"hypocrisy":0,"question":0}}]})",
        ScoreKind::kTypeDist);
  });
  schema([] { wire::decode_embed_response(R"({"dim":2,"results":[{"id":"i0","vector":[1.0]}]})"); });
  schema([] { wire::decode_embed_response(R"({"dim":0,"results":[]})"); });
  schema([] { wire::decode_capabilities(R"({"kinds":["toxicity"],"embed_dim":-1,"versions":{}})"); });
  schema([] { wire::decode_score_request(R"({"kind":"toxicity","items":[{"id":"i0","text":"x"}]})"); });
  // Unbounded kinds accept values outside [0, 1]; integers are valid numbers.
  EXPECT_NO_THROW(wire::decode_score_response(R"({"model_version":"v","results":[{"id":"i0","value":-1.5}]})", ScoreKind::kLearnedRef));
  EXPECT_NO_THROW(wire::decode_score_response(R"({"model_version":"v","results":[{"id":"i0","value":1}]})", ScoreKind::kToxicity));
}

TEST(WireDecode, UnknownKindsAreKeptAside) {
  const auto caps = wire::decode_capabilities(R"({"kinds":["toxicity","sentiment"],"embed_dim":8,"versions":{}})");
  EXPECT_EQ(caps.kinds.size(), 1u);
  EXPECT_EQ(caps.unknown_kinds, (std::vector<std::string>{"sentiment"}));
}

// ---------------------------------------------------------------------------
// Client against the in-process stub

TEST(ScorerClient, ScoresInRequestOrderAcrossBatches) {
  ScorerOptions opt = fast_options();
  opt.batch_size = 3;
  ScorerClient client(std::make_shared<StubScorerTransport>(), opt);
  const auto reqs = tox_requests(10);
  const auto res = client.score(reqs);
  ASSERT_EQ(res.size(), 10u);
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    EXPECT_TRUE(res[i].ok());
    EXPECT_EQ(*res[i].value, StubScorer::value(ScoreKind::kToxicity, reqs[i].text, std::nullopt));
    EXPECT_EQ(res[i].model_version, "stub-1");
  }
  opt.max_concurrency = 4;
  ScorerClient parallel(std::make_shared<StubScorerTransport>(), opt);
  const auto again = parallel.score(reqs);
  for (std::size_t i = 0; i < reqs.size(); ++i) EXPECT_EQ(*again[i].value, *res[i].value);
  EXPECT_EQ(client.observed_versions().at("toxicity"), "stub-1");
  EXPECT_TRUE(client.warnings().empty());
}

TEST(ScorerClient, TypeDistributionsAndContexts) {
  ScorerClient client(std::make_shared<StubScorerTransport>(), fast_options());
  const std::vector<ScoreRequest> types = {{ScoreKind::kTypeDist, "Is that so?", std::nullopt, "b"}};
  const auto d = client.score(types).at(0).distribution.value();
  double sum = 0.0;
  for (double p : d) sum += p;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  const std::vector<ScoreRequest> ref = {{ScoreKind::kLearnedRef, "hyp", std::string("ref"), "b"}};
  EXPECT_EQ(*client.score(ref).at(0).value, StubScorer::value(ScoreKind::kLearnedRef, "hyp", std::string("ref")));
}

TEST(ScorerClient, RequestValidation) {
  ScorerClient client(std::make_shared<StubScorerTransport>(), fast_options());
  const std::vector<ScoreRequest> missing = {{ScoreKind::kCounterargument, "x", std::nullopt, "b"}};
  EXPECT_THROW(client.score(missing), InvalidArgument);
  const std::vector<ScoreRequest> extra = {{ScoreKind::kToxicity, "x", std::string("c"), "b"}};
  EXPECT_THROW(client.score(extra), InvalidArgument);
  const std::vector<ScoreRequest> mixed = {{ScoreKind::kToxicity, "x", std::nullopt, "b"},
                                           {ScoreKind::kArgument, "y", std::nullopt, "b"}};
  EXPECT_THROW(client.score(mixed), InvalidArgument);
  EXPECT_TRUE(client.score(std::span<const ScoreRequest>{}).empty());
  EXPECT_THROW(ScorerClient(nullptr), InvalidArgument);
}

TEST(ScorerClient, EmbedTracksSessionDimension) {
  ScorerOptions opt = fast_options();
  opt.batch_size = 2;
  ScorerClient client(std::make_shared<StubScorerTransport>(), opt);
  const std::vector<std::string> texts = {"a b", "c", "d e f"};
  const auto v = client.embed(texts);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[2], StubScorer::embedding("d e f"));
  EXPECT_EQ(client.session_dim(), 64u);
}

TEST(ScorerClient, UnservedKindIsRejected) {
  StubScorer::Options o;
  o.kinds = {ScoreKind::kToxicity};
  ScorerClient client(std::make_shared<StubScorerTransport>(StubScorer(o)), fast_options());
  EXPECT_EQ(client.capabilities().kinds.size(), 1u);
  const std::vector<ScoreRequest> reqs = {{ScoreKind::kArgument, "x", std::nullopt, "b"}};
  EXPECT_EQ(error_kind([&] { client.score(reqs); }), ScorerErrorKind::kRejected);
}

// ---------------------------------------------------------------------------
// Client against scripted failures

TEST(ScorerClient, RetriesTransportAndServerErrors) {
  auto t = std::make_shared<ScriptedTransport>();
  t->push_failure();
  t->push(503, "busy");
  t->push(200, R"({"model_version":"v1","results":[{"id":"i0","value":0.5}]})");
  ScorerClient client(t, fast_options());
  const auto res = client.score(tox_requests(1));
  EXPECT_EQ(*res[0].value, 0.5);
  EXPECT_EQ(t->bodies.size(), 3u);
  EXPECT_EQ(t->paths[0], "/v1/score");
  EXPECT_EQ(t->bodies[0], t->bodies[2]);
}

TEST(ScorerClient, GivesUpAfterMaxAttempts) {
  auto t = std::make_shared<ScriptedTransport>();
  for (int i = 0; i < 3; ++i) t->push(500, "down");
  ScorerClient client(t, fast_options());
  EXPECT_EQ(error_kind([&] { client.score(tox_requests(1)); }), ScorerErrorKind::kTransport);
  EXPECT_EQ(t->bodies.size(), 3u);
}

TEST(ScorerClient, ClientErrorsAreNotRetried) {
  auto t = std::make_shared<ScriptedTransport>();
  t->push(422, R"({"error":"bad"})");
  ScorerClient client(t, fast_options());
  EXPECT_EQ(error_kind([&] { client.score(tox_requests(1)); }), ScorerErrorKind::kRejected);
  EXPECT_EQ(t->bodies.size(), 1u);
}

TEST(ScorerClient, SchemaViolationsAreFatal) {
  const std::vector<std::string> bad = {
      "not json",
      R"({"model_version":"v","results":[]})",
      R"({"model_version":"v","results":[{"id":"i9","value":0.1}]})",
      R"({"model_version":"v","results":[{"id":"i0","value":0.1},{"id":"i0","value":0.2}]})",
      R"({"model_version":"v","results":[{"id":"i0","value":7.0}]})",
  };
  for (const auto& body : bad) {
    auto t = std::make_shared<ScriptedTransport>();
    t->push(200, body);
    ScorerClient client(t, fast_options());
    const auto n = body.find("i0\",\"value\":0.1},{") != std::string::npos ? 2 : 1;
    EXPECT_EQ(error_kind([&] { client.score(tox_requests(static_cast<std::size_t>(n))); }),
              ScorerErrorKind::kSchema)
        << body;
    EXPECT_EQ(t->bodies.size(), 1u);
  }
}

TEST(ScorerClient, ResultsMatchedById) {
  auto t = std::make_shared<ScriptedTransport>();
  t->push(200, R"({"model_version":"v","results":[{"id":"i1","value":0.2},{"id":"i0","value":0.1}]})");
  ScorerClient client(t, fast_options());
  const auto res = client.score(tox_requests(2));
  EXPECT_EQ(*res[0].value, 0.1);
  EXPECT_EQ(*res[1].value, 0.2);
}

TEST(ScorerClient, PerItemErrorsSurface) {
  auto t = std::make_shared<ScriptedTransport>();
  t->push(200, R"({"model_version":"v","results":[{"id":"i0","error":"oom"}]})");
  ScorerClient client(t, fast_options());
  const auto res = client.score(tox_requests(1));
  EXPECT_FALSE(res[0].ok());
  EXPECT_EQ(*res[0].error, "oom");
}

TEST(ScorerClient, ModelVersionChangeWarns) {
  auto t = std::make_shared<ScriptedTransport>();
  t->push(200, R"({"model_version":"v1","results":[{"id":"i0","value":0.1}]})");
  t->push(200, R"({"model_version":"v2","results":[{"id":"i0","value":0.1}]})");
  ScorerClient client(t, fast_options());
  client.score(tox_requests(1));
  client.score(tox_requests(1));
  ASSERT_EQ(client.warnings().size(), 1u);
  EXPECT_NE(client.warnings()[0].find("v2"), std::string::npos);
  EXPECT_EQ(client.observed_versions().at("toxicity"), "v2");
}

TEST(ScorerClient, EmbeddingDimensionDriftIsFatal) {
  auto t = std::make_shared<ScriptedTransport>();
  t->push(200, R"({"dim":2,"results":[{"id":"i0","vector":[0.1,0.2]}]})");
  t->push(200, R"({"dim":3,"results":[{"id":"i0","vector":[0.1,0.2,0.3]}]})");
  ScorerClient client(t, fast_options());
  const std::vector<std::string> one = {"x"};
  client.embed(one);
  EXPECT_EQ(error_kind([&] { client.embed(one); }), ScorerErrorKind::kDimensionDrift);
}

TEST(ScorerClient, UnreachableProbeExplainsRemedy) {
  auto t = std::make_shared<ScriptedTransport>();
  for (int i = 0; i < 3; ++i) t->push_failure();
  ScorerClient client(t, fast_options());
  try {
    client.capabilities();
    FAIL() << "expected ScorerError";
  } catch (const ScorerError& e) {
    EXPECT_EQ(e.kind(), ScorerErrorKind::kUnreachable);
    EXPECT_NE(std::string(e.what()).find("--no-scorer"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("--scorer-url"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Over HTTP

TEST(ScorerHttp, LoopbackMatchesInProcessStub) {
  StubScorer stub;
  loopback::Server server;
  auto serve = [&stub](const httplib::Request& req, httplib::Response& res) {
    const auto r = stub.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server.routes().Get("/v1/capabilities", serve);
  server.routes().Post("/v1/score", serve);
  server.routes().Post("/v1/embed", serve);
  server.start();

  ScorerOptions opt = fast_options();
  opt.batch_size = 4;
  opt.max_concurrency = 3;
  auto remote = ScorerClient::connect(server.url(), opt);
  ScorerClient local(std::make_shared<StubScorerTransport>(), opt);
  EXPECT_EQ(wire::encode_capabilities(remote.capabilities()),
            wire::encode_capabilities(local.capabilities()));
  const auto reqs = tox_requests(13);
  const auto a = remote.score(reqs);
  const auto b = local.score(reqs);
  for (std::size_t i = 0; i < reqs.size(); ++i) EXPECT_EQ(*a[i].value, *b[i].value);
  const std::vector<std::string> texts = {"some words", "more words here"};
  EXPECT_EQ(remote.embed(texts), local.embed(texts));
  EXPECT_EQ(remote.describe(), server.url());
}

TEST(ScorerHttp, UnreachableServer) {
  ScorerOptions opt = fast_options();
  opt.max_attempts = 2;
  opt.timeout = 500ms;
  auto client = ScorerClient::connect("http://127.0.0.1:" + std::to_string(loopback::unused_port()), opt);
  EXPECT_EQ(error_kind([&] { client.capabilities(); }), ScorerErrorKind::kUnreachable);
}

TEST(ScorerHttp, ServerErrorThenRecovery) {
  loopback::Server server;
  std::atomic<int> calls{0};
  server.routes().Post("/v1/score", [&](const httplib::Request& req, httplib::Response& res) {
    if (++calls == 1) {
      res.status = 502;
      return;
    }
    const auto r = StubScorer().handle("POST", "/v1/score", req.body);
    res.set_content(r.body, "application/json");
  });
  server.start();
  auto client = ScorerClient::connect(server.url(), fast_options());
  EXPECT_EQ(client.score(tox_requests(2)).size(), 2u);
  EXPECT_EQ(calls.load(), 2);
}
