#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cspeech/error.hpp"
#include "cspeech/pipeline.hpp"
#include "loopback.hpp"

using namespace cspeech;
namespace fs = std::filesystem;

namespace {

const fs::path kData = CSPEECH_TEST_DATA_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// A scratch copy of the toy inputs so that runs never write into the source tree.
struct Workspace {
  fs::path dir;
  explicit Workspace(const std::string& name) : dir(fs::temp_directory_path() / ("cspeech_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const char* f : {"toy_pairs.jsonl", "toy_typed.jsonl", "toy_run.json"}) {
      fs::copy_file(kData / f, dir / f);
    }
  }
  ~Workspace() { fs::remove_all(dir); }
  RunConfig config() const { return load_run_config(dir / "toy_run.json"); }
};

}  // namespace

TEST(RunConfig, LoadsAndResolvesPaths) {
  const auto c = load_run_config(kData / "toy_run.json");
  EXPECT_EQ(c.seed, 7u);
  ASSERT_EQ(c.datasets.size(), 1u);
  EXPECT_EQ(c.datasets[0].id, DatasetId::kConan);
  EXPECT_EQ(c.datasets[0].pairs, kData / "toy_pairs.jsonl");
  EXPECT_EQ(c.strategies.size(), 3u);
  EXPECT_EQ(c.scorer.url, "stub");
  EXPECT_EQ(c.mining.cluster.elbow.k_max, 5u);
  EXPECT_NO_THROW(c.validate());
  const auto back = run_config_from_json(nlohmann::json::parse(to_json(c).dump()), kData);
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
}

TEST(RunConfig, ValidationFailures) {
  auto c = load_run_config(kData / "toy_run.json");
  c.datasets[0].pairs = kData / "missing.jsonl";
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = load_run_config(kData / "toy_run.json");
  c.backends.clear();
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = load_run_config(kData / "toy_run.json");
  c.scorer.url.reset();
  EXPECT_THROW(c.validate(), InvalidArgument);  // cluster mining needs embeddings
  EXPECT_THROW(load_run_config(kData / "nope.json"), Error);
}

TEST(RunConfig, HashDependsOnContentNotLocation) {
  Workspace a("hash_a");
  Workspace b("hash_b");
  auto ca = a.config();
  auto cb = b.config();
  cb.out = "/somewhere/else";
  EXPECT_EQ(config_hash(ca), config_hash(cb));
  cb.seed = 8;
  EXPECT_NE(config_hash(ca), config_hash(cb));
  std::ofstream(b.dir / "toy_pairs.jsonl", std::ios::app)
      << "{\"hate_speech\":\"one more\",\"counterspeech\":\"reply\"}\n";
  EXPECT_NE(config_hash(ca), config_hash(b.config()));
}

TEST(References, GroupByNormalisedHateSpeech) {
  const std::vector<CsPair> pairs = {{" hate  a", "x"}, {"hate a", "y"}, {"hate b", "z"}};
  const auto refs = build_references(pairs);
  ASSERT_EQ(refs.size(), 2u);
  EXPECT_EQ(refs.at(hate_key("hate a")), (std::vector<std::string>{"x", "y"}));
}

TEST(Plan, OneRequestPerCellPlusBaseline) {
  std::map<PromptStrategy, PromptRegistry> prompts;
  prompts[PromptStrategy::kManual] = load_manual_prompts(default_manual_registry());
  prompts[PromptStrategy::kFrequency] = load_manual_prompts(default_manual_registry());
  const std::vector<std::string> hate = {"h one", "h two", "h three"};
  const std::vector<PromptStrategy> strategies = {PromptStrategy::kManual, PromptStrategy::kFrequency};
  const std::vector<CsType> types = {CsType::kHumor, CsType::kFacts};
  const auto reqs = plan_requests(DatasetId::kConan, "m", hate, prompts, strategies, types, {}, 3);
  ASSERT_EQ(reqs.size(), 15u);
  EXPECT_EQ(reqs[0].request_id, "conan:m:none:base:00000");
  EXPECT_FALSE(reqs[0].type_prompt.has_value());
  EXPECT_EQ(reqs[1].request_id, "conan:m:manual:humor:00000");
  EXPECT_EQ(reqs[1].type_prompt, "This is funny");
  EXPECT_EQ(reqs[14].hate_speech, "h three");
  std::set<std::string> ids;
  std::set<std::uint64_t> seeds;
  for (const auto& r : reqs) {
    ids.insert(r.request_id);
    seeds.insert(r.config.seed);
    EXPECT_NO_THROW(r.validate());
  }
  EXPECT_EQ(ids.size(), reqs.size());
  EXPECT_EQ(seeds.size(), reqs.size());
  const auto again = plan_requests(DatasetId::kConan, "m", hate, prompts, strategies, types, {}, 3);
  for (std::size_t i = 0; i < reqs.size(); ++i) EXPECT_EQ(again[i].config.seed, reqs[i].config.seed);

  const std::vector<PromptStrategy> cluster = {PromptStrategy::kCluster};
  EXPECT_THROW(plan_requests(DatasetId::kConan, "m", hate, prompts, cluster, types, {}, 3), InvalidArgument);
}

TEST(Rows, JsonlRoundTrip) {
  const auto dir = fs::temp_directory_path() / "cspeech_rows_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  MetricRow r;
  r.record_id = "x";
  r.dataset = DatasetId::kGab;
  r.backend_id = "b";
  r.gleu = 0.125;
  r.tox = 0.5;
  const std::vector<MetricRow> rows = {r, r};
  write_rows_jsonl(dir / "rows.jsonl", rows);
  const auto back = read_rows_jsonl(dir / "rows.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(to_json(back[1]).dump(), to_json(r).dump());
  fs::remove_all(dir);
}

TEST(Pipeline, ResumeSkipsCompletedStagesAndRefusesOtherConfigs) {
  Workspace w("resume");
  auto c = w.config();
  c.out = w.dir / "out";
  std::ostringstream log1;
  const auto first = run_pipeline(c, {.resume = false, .log = &log1});
  ASSERT_EQ(first.exit_code, 0) << first.message;
  EXPECT_GT(first.n_records, 0u);
  const auto report = slurp(c.out / "report" / "report.json");
  EXPECT_FALSE(report.empty());

  std::ostringstream log2;
  const auto second = run_pipeline(c, {.resume = true, .log = &log2});
  ASSERT_EQ(second.exit_code, 0) << second.message;
  for (auto stage : kStages) {
    EXPECT_NE(log2.str().find("[" + std::string(stage) + "] already complete"), std::string::npos);
  }
  EXPECT_EQ(slurp(c.out / "report" / "report.json"), report);

  c.seed = 99;
  const auto refused = run_pipeline(c, {.resume = true, .log = nullptr});
  EXPECT_EQ(refused.exit_code, 2);
  EXPECT_NE(refused.message.find("cannot resume"), std::string::npos);
}

TEST(Pipeline, FailedGenerationsGiveExitCodeOne) {
  Workspace w("failing");
  auto c = w.config();
  c.out = w.dir / "out";
  c.strategies = {PromptStrategy::kManual};
  c.types = {CsType::kFacts};
  BackendDescriptor d;
  d.backend_id = "down";
  d.kind = BackendKind::kChat;
  d.endpoint = "http://127.0.0.1:" + std::to_string(loopback::unused_port());
  d.max_attempts = 1;
  d.backoff = std::chrono::milliseconds(0);
  d.timeout = std::chrono::milliseconds(2000);
  c.backends = {d};
  const auto r = run_pipeline(c);
  EXPECT_EQ(r.exit_code, 1) << r.message;
  EXPECT_GT(r.n_failed, 0u);
  EXPECT_EQ(r.n_failed, r.n_records);
  EXPECT_TRUE(fs::exists(c.out / "report" / "report.json"));
}

TEST(Pipeline, BadConfigIsFatal) {
  Workspace w("badcfg");
  auto c = w.config();
  c.out = w.dir / "out";
  c.typed_corpus = w.dir / "gone.jsonl";
  const auto r = run_pipeline(c);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_EQ(r.failed_stage, "config");
}
