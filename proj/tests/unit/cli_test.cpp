#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

#ifdef CSPEECH_CLI_PATH

namespace {

const fs::path kData = CSPEECH_TEST_DATA_DIR;

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + CSPEECH_CLI_PATH + "\" " + args + " > \"" +
                          log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Scratch {
  fs::path dir = fs::temp_directory_path() / "cspeech_cli_test";
  Scratch() {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
};

}  // namespace

TEST(Cli, HelpListsSubcommands) {
  Scratch s;
  EXPECT_EQ(run("--help", s.dir / "log"), 0);
  std::ifstream in(s.dir / "log");
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  for (const char* sub : {"ingest", "split", "mine-prompts", "generate", "score", "report",
                          "correlate", "pipeline"}) {
    EXPECT_NE(text.find(sub), std::string::npos) << sub;
  }
}

TEST(Cli, UsageErrorsAreFatal) {
  Scratch s;
  EXPECT_EQ(run("pipeline", s.dir / "log"), 2);
  EXPECT_EQ(run("pipeline --config \"" + (s.dir / "missing.json").string() + "\"", s.dir / "log"), 2);
}

TEST(Cli, PipelineRunsOnToyData) {
  Scratch s;
  for (const char* f : {"toy_pairs.jsonl", "toy_typed.jsonl", "toy_run.json"}) {
    fs::copy_file(kData / f, s.dir / f);
  }
  const auto out = s.dir / "run";
  EXPECT_EQ(run("pipeline --config \"" + (s.dir / "toy_run.json").string() + "\" --no-scorer " +
                    "--strategies manual,freq --out \"" + out.string() + "\"",
                s.dir / "log"),
            0);
  EXPECT_TRUE(fs::exists(out / "report" / "report.txt"));
  EXPECT_TRUE(fs::exists(out / "manifest.json"));
}

#endif
