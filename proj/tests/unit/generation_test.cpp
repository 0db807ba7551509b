#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <sstream>

#include "cspeech/error.hpp"
#include "cspeech/generation.hpp"
#include "cspeech/text_util.hpp"
#include "loopback.hpp"

using namespace cspeech;
using namespace std::chrono_literals;

namespace {

GenerationRequest prompted_request(std::string id = "r1") {
  GenerationRequest r;
  r.request_id = std::move(id);
  r.dataset = DatasetId::kConan;
  r.hate_speech = "They are all criminals.";
  r.type_prompt = "This is a fact";
  r.cs_type = CsType::kFacts;
  r.strategy = PromptStrategy::kManual;
  r.config.min_new_tokens = 5;
  r.config.max_new_tokens = 12;
  r.config.seed = 3;
  return r;
}

BackendDescriptor http_descriptor(BackendKind kind, const std::string& endpoint) {
  BackendDescriptor d;
  d.backend_id = "remote";
  d.kind = kind;
  d.endpoint = endpoint;
  d.model_name = "test-model";
  d.max_attempts = 3;
  d.timeout = 2000ms;
  d.backoff = 1ms;
  return d;
}

std::string chat_reply(const std::string& content) {
  return R"({"choices":[{"index":0,"message":{"role":"assistant","content":")" + content +
         R"("},"finish_reason":"stop"}]})";
}

GenerationErrorKind failure_kind(Backend& backend, const ComposedInput& input) {
  try {
    backend.complete(input, DecodingConfig{});
  } catch (const GenerationError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected GenerationError";
  return GenerationErrorKind::kTransport;
}

}  // namespace

TEST(Decoding, Validation) {
  DecodingConfig c;
  EXPECT_NO_THROW(c.validate());
  c.min_new_tokens = 100;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.top_p = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.temperature = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Decoding, JsonRoundTrip) {
  DecodingConfig c;
  c.seed = 77;
  c.top_k = 5;
  const auto back = decoding_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
}

TEST(Descriptor, JsonRoundTripAndValidation) {
  const auto d = http_descriptor(BackendKind::kChat, "https://api.example.com/v1");
  const auto back = backend_descriptor_from_json(nlohmann::json::parse(to_json(d).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(d).dump());
  auto mock = d;
  mock.kind = BackendKind::kMock;
  EXPECT_THROW(mock.validate(), InvalidArgument);
  auto no_id = d;
  no_id.backend_id.clear();
  EXPECT_THROW(no_id.validate(), InvalidArgument);
}

TEST(Request, PromptPresentIffStrategy) {
  auto r = prompted_request();
  EXPECT_NO_THROW(r.validate());
  r.strategy = PromptStrategy::kNone;
  EXPECT_THROW(r.validate(), InvalidArgument);
  r.type_prompt.reset();
  EXPECT_NO_THROW(r.validate());
  r.hate_speech = "  ";
  EXPECT_THROW(r.validate(), InvalidArgument);
}

TEST(Compose, CompletionAppendsPromptOnNewLine) {
  const auto in = compose_input(prompted_request(), BackendKind::kCompletion);
  EXPECT_EQ(std::get<std::string>(in), "They are all criminals.\nThis is a fact");
  auto base = prompted_request();
  base.type_prompt.reset();
  base.strategy = PromptStrategy::kNone;
  EXPECT_EQ(std::get<std::string>(compose_input(base, BackendKind::kMock)),
            "They are all criminals.");
}

TEST(Compose, ChatUsesSystemAndUserMessages) {
  const auto in = compose_input(prompted_request(), BackendKind::kChat);
  const auto& msgs = std::get<std::vector<ChatMessage>>(in);
  ASSERT_EQ(msgs.size(), 2u);
  EXPECT_EQ(msgs[0], (ChatMessage{"system", std::string(kChatSystemMessage)}));
  EXPECT_EQ(msgs[1].role, "user");
  EXPECT_EQ(msgs[1].content,
            "They are all criminals.\nstart the counterspeech with following \"This is a fact\"");
}

TEST(Mock, DeterministicAndBounded) {
  BackendDescriptor d;
  d.backend_id = "mock";
  MockBackend backend(d);
  const auto req = prompted_request();
  const auto a = generate(backend, req);
  const auto b = generate(backend, req);
  EXPECT_EQ(a.output, b.output);
  EXPECT_TRUE(a.output.starts_with("This is a fact "));
  const auto words = split_whitespace(a.output).size() - 4;
  EXPECT_GE(words, 5u);
  EXPECT_LE(words, 12u);
  EXPECT_FALSE(a.short_output);
  auto other = req;
  other.config.seed = 4;
  EXPECT_NE(generate(backend, other).output, a.output);
}

TEST(Records, JsonlRoundTrip) {
  BackendDescriptor d;
  d.backend_id = "mock";
  MockBackend backend(d);
  std::vector<GenerationRecord> records = {generate(backend, prompted_request("a"))};
  GenerationRecord failed;
  failed.request = prompted_request("b");
  failed.backend_id = "mock";
  failed.composed_input = compose_input(failed.request, BackendKind::kChat);
  failed.error_kind = GenerationErrorKind::kRefused;
  failed.error = "refused";
  records.push_back(failed);
  std::stringstream io;
  write_records_jsonl(io, records);
  const auto back = read_records_jsonl(io);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(to_json(back[i]).dump(), to_json(records[i]).dump());
  EXPECT_FALSE(back[1].ok());
}

TEST(Batch, PreservesOrderAcrossWidths) {
  BackendDescriptor d;
  d.backend_id = "mock";
  MockBackend backend(d);
  std::vector<GenerationRequest> reqs;
  for (int i = 0; i < 25; ++i) {
    auto r = prompted_request("r" + std::to_string(i));
    r.config.seed = static_cast<std::uint64_t>(i);
    reqs.push_back(r);
  }
  const auto narrow = batch_generate(backend, reqs, 1);
  const auto wide = batch_generate(backend, reqs, 6);
  ASSERT_EQ(wide.records.size(), reqs.size());
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    EXPECT_EQ(wide.records[i].request.request_id, reqs[i].request_id);
    EXPECT_EQ(wide.records[i].output, narrow.records[i].output);
  }
  EXPECT_EQ(wide.failures, 0u);
  EXPECT_THROW(batch_generate(backend, reqs, 0), InvalidArgument);
}

TEST(Batch, FailuresBecomeErrorRecords) {
  class Flaky final : public Backend {
  public:
    Flaky() { d_.backend_id = "flaky"; }
    const BackendDescriptor& descriptor() const override { return d_; }
    BackendReply complete(const ComposedInput& input, const DecodingConfig&) override {
      if (std::get<std::string>(input).find("bad") != std::string::npos) {
        throw GenerationError(GenerationErrorKind::kRefused, "no");
      }
      return {"fine", {}, 1};
    }

  private:
    BackendDescriptor d_;
  } flaky;
  auto good = prompted_request("good");
  auto bad = prompted_request("bad");
  bad.hate_speech = "bad input";
  const std::vector<GenerationRequest> reqs = {good, bad, good};
  const auto res = batch_generate(flaky, reqs, 2);
  EXPECT_EQ(res.failures, 1u);
  EXPECT_TRUE(res.records[0].ok());
  EXPECT_FALSE(res.records[1].ok());
  EXPECT_EQ(res.records[1].error_kind, GenerationErrorKind::kRefused);
  EXPECT_EQ(res.records[1].request.request_id, "bad");
}

TEST(HttpBody, ExtendedSamplingFieldsOnlyWhenEnabled) {
  auto d = http_descriptor(BackendKind::kChat, "http://127.0.0.1:1/v1");
  HttpBackend plain(d);
  ParameterReport report;
  const auto input = compose_input(prompted_request(), BackendKind::kChat);
  const auto body = plain.build_body(input, prompted_request().config, &report);
  EXPECT_FALSE(body.contains("top_k"));
  EXPECT_EQ(body.at("max_tokens"), 12);
  EXPECT_EQ(body.at("messages").size(), 2u);
  EXPECT_EQ(report.unsupported.size(), 3u);
  d.extended_sampling = true;
  HttpBackend extended(d);
  const auto ext = extended.build_body(input, prompted_request().config, &report);
  EXPECT_EQ(ext.at("top_k"), 100);
  EXPECT_EQ(ext.at("min_tokens"), 5);
  EXPECT_TRUE(report.unsupported.empty());
}

TEST(HttpBackend, ChatSuccessSendsAuthAndBody) {
  loopback::Server server;
  std::mutex mu;
  std::string auth;
  nlohmann::json seen;
  server.routes().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard lock(mu);
    auth = req.get_header_value("Authorization");
    seen = nlohmann::json::parse(req.body);
    res.set_content(chat_reply("Not true."), "application/json");
  });
  server.start();
  ::setenv("CSPEECH_TEST_TOKEN", "sekret", 1);
  auto d = http_descriptor(BackendKind::kChat, server.url("/v1"));
  d.auth_env = "CSPEECH_TEST_TOKEN";
  HttpBackend backend(d);
  const auto rec = generate(backend, prompted_request());
  EXPECT_EQ(rec.output, "Not true.");
  EXPECT_EQ(rec.attempts, 1u);
  // Two words against a minimum of five that the backend could not enforce.
  EXPECT_TRUE(rec.short_output);
  std::lock_guard lock(mu);
  EXPECT_EQ(auth, "Bearer sekret");
  EXPECT_EQ(seen.at("model"), "test-model");
  EXPECT_EQ(seen.at("messages").at(1).at("role"), "user");
}

TEST(HttpBackend, CompletionEndpoint) {
  loopback::Server server;
  server.routes().Post("/completions", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    const std::string reply = R"({"choices":[{"text":" continued","finish_reason":"length"}]})";
    res.set_content(body.at("prompt").get<std::string>().ends_with("This is a fact") ? reply : "{}",
                    "application/json");
  });
  server.start();
  HttpBackend backend(http_descriptor(BackendKind::kCompletion, server.url()));
  EXPECT_EQ(generate(backend, prompted_request()).output, " continued");
}

TEST(HttpBackend, RetriesServerErrorsThenSucceeds) {
  loopback::Server server;
  std::atomic<int> calls{0};
  server.routes().Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (++calls < 3) {
      res.status = calls == 1 ? 503 : 429;
      return;
    }
    res.set_content(chat_reply("ok then"), "application/json");
  });
  server.start();
  HttpBackend backend(http_descriptor(BackendKind::kChat, server.url()));
  const auto rec = generate(backend, prompted_request());
  EXPECT_EQ(rec.output, "ok then");
  EXPECT_EQ(rec.attempts, 3u);
  EXPECT_EQ(calls.load(), 3);
}

TEST(HttpBackend, GivesUpAfterMaxAttempts) {
  loopback::Server server;
  std::atomic<int> calls{0};
  server.routes().Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 500;
  });
  server.start();
  HttpBackend backend(http_descriptor(BackendKind::kChat, server.url()));
  const auto input = compose_input(prompted_request(), BackendKind::kChat);
  try {
    backend.complete(input, DecodingConfig{});
    FAIL() << "expected GenerationError";
  } catch (const GenerationError& e) {
    EXPECT_EQ(e.kind(), GenerationErrorKind::kTransport);
    EXPECT_EQ(e.attempts(), 3u);
    EXPECT_TRUE(e.retryable());
  }
  EXPECT_EQ(calls.load(), 3);
}

TEST(HttpBackend, RefusalsAreTyped) {
  loopback::Server server;
  server.routes().Post("/a/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.status = 400;
    res.set_content(R"({"error":{"code":"content_filter","message":"blocked"}})", "application/json");
  });
  server.routes().Post("/b/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":null},"finish_reason":"content_filter"}]})",
                    "application/json");
  });
  server.routes().Post("/c/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":null,"refusal":"I can't help"},"finish_reason":"stop"}]})",
                    "application/json");
  });
  server.routes().Post("/d/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.status = 400;
    res.set_content(R"({"error":{"message":"bad model"}})", "application/json");
  });
  server.routes().Post("/e/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json", "text/plain");
  });
  server.start();
  const auto input = compose_input(prompted_request(), BackendKind::kChat);
  for (const char* p : {"/a", "/b", "/c"}) {
    HttpBackend backend(http_descriptor(BackendKind::kChat, server.url(p)));
    EXPECT_EQ(failure_kind(backend, input), GenerationErrorKind::kRefused) << p;
  }
  for (const char* p : {"/d", "/e"}) {
    HttpBackend backend(http_descriptor(BackendKind::kChat, server.url(p)));
    EXPECT_EQ(failure_kind(backend, input), GenerationErrorKind::kBadResponse) << p;
  }
}

TEST(HttpBackend, TimeoutIsNotRetried) {
  loopback::Server server;
  std::atomic<int> calls{0};
  server.routes().Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    std::this_thread::sleep_for(600ms);
    res.set_content(chat_reply("late"), "application/json");
  });
  server.start();
  auto d = http_descriptor(BackendKind::kChat, server.url());
  d.timeout = 150ms;
  HttpBackend backend(d);
  const auto input = compose_input(prompted_request(), BackendKind::kChat);
  EXPECT_EQ(failure_kind(backend, input), GenerationErrorKind::kTimeout);
  EXPECT_EQ(calls.load(), 1);
}

TEST(HttpBackend, UnreachableEndpointIsTransportError) {
  auto d = http_descriptor(BackendKind::kChat,
                           "http://127.0.0.1:" + std::to_string(loopback::unused_port()));
  d.max_attempts = 2;
  HttpBackend backend(d);
  const auto input = compose_input(prompted_request(), BackendKind::kChat);
  EXPECT_EQ(failure_kind(backend, input), GenerationErrorKind::kTransport);
}

TEST(HttpBackend, RejectsBadEndpoints) {
  EXPECT_THROW(HttpBackend(http_descriptor(BackendKind::kChat, "ftp://x")), InvalidArgument);
  BackendDescriptor mock;
  mock.backend_id = "m";
  EXPECT_THROW(HttpBackend{mock}, InvalidArgument);
  EXPECT_NE(dynamic_cast<MockBackend*>(make_backend(mock).get()), nullptr);
}
