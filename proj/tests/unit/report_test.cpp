#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cspeech/report.hpp"

using namespace cspeech;
namespace fs = std::filesystem;

namespace {

MetricRow row(const std::string& id, PromptStrategy s, double gleu_value) {
  MetricRow r;
  r.record_id = id;
  r.dataset = DatasetId::kConan;
  r.backend_id = "mock";
  r.strategy = s;
  r.gleu = gleu_value;
  r.meteor = 0.5;
  r.novelty = 0.75;
  r.flesch = 71.234;
  return r;
}

RunReport sample_report() {
  std::vector<MetricRow> rows = {row("a", PromptStrategy::kNone, 0.2),
                                 row("b", PromptStrategy::kNone, 0.4),
                                 row("c", PromptStrategy::kManual, 0.6)};
  rows[0].tox = 0.125;
  rows[2].cs_type = CsType::kHumor;
  rows[2].type_dist = TypeDistribution{0, 0, 1, 0, 0, 0};
  Provenance p;
  p.tool_version = "t";
  p.seed = 9;
  p.config_hash = "abc";
  p.backends = {"mock"};
  p.scorer = "disabled";
  return build_report(rows, p, 5, 1, {{"z", "failed"}, {"d", "no words"}, {"d", "a"}},
                      {"scorer disabled"});
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Report, ExclusionsAreSorted) {
  const auto r = sample_report();
  ASSERT_EQ(r.excluded.size(), 3u);
  EXPECT_EQ(r.excluded[0].record_id, "d");
  EXPECT_EQ(r.excluded[0].reason, "a");
  EXPECT_EQ(r.excluded[2].record_id, "z");
  EXPECT_EQ(r.vanilla.groups.size(), 2u);
}

TEST(Report, TextHasEveryColumnAndDashesForGaps) {
  const auto text = render_text(sample_report());
  for (const char* label : {"gleu", "met", "div", "nov", "blrt", "cs", "c_arg", "arg", "tox", "fre",
                            "updown", "width", "depth"}) {
    EXPECT_NE(text.find(label), std::string::npos) << label;
  }
  std::istringstream lines(text);
  std::string line;
  bool saw_base = false;
  while (std::getline(lines, line)) {
    if (!line.starts_with("CONAN")) continue;
    std::istringstream cells(line);
    std::vector<std::string> v;
    for (std::string c; cells >> c;) v.push_back(c);
    ASSERT_EQ(v.size(), 17u) << line;
    if (v[3] == "2") {
      saw_base = true;
      EXPECT_EQ(v[4], "0.300");
      EXPECT_EQ(v[6], "-");
      EXPECT_EQ(v[12], "0.125");
      EXPECT_EQ(v[13], "71.23");
    }
  }
  EXPECT_TRUE(saw_base);
  EXPECT_NE(text.find("type precision: CONAN / mock"), std::string::npos);
  EXPECT_NE(text.find("scorer disabled"), std::string::npos);
  EXPECT_NE(text.find("d: no words"), std::string::npos);
}

TEST(Report, WritesJsonAndText) {
  const auto dir = fs::temp_directory_path() / "cspeech_report_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto r = sample_report();
  write_report(dir, r);
  const auto j = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(j.at("provenance").at("config_hash"), "abc");
  EXPECT_EQ(j.at("provenance").at("seed"), 9);
  EXPECT_EQ(slurp(dir / "report.json"), to_json(r).dump(2) + "\n");
  EXPECT_NE(slurp(dir / "report.txt").find(render_text(r)), std::string::npos);
  fs::remove_all(dir);
}
