#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cspeech/corpus.hpp"
#include "cspeech/evaluation.hpp"
#include "cspeech/generation.hpp"
#include "cspeech/prompt_engine.hpp"
#include "cspeech/scorer_client.hpp"

namespace cspeech {

std::string_view tool_version();

struct DatasetSpec {
  DatasetId id = DatasetId::kOther;
  std::filesystem::path pairs;
  std::optional<InputFormat> format;  // from the extension when absent
  SplitRule rule = SplitRule::kSmall8020;
  double train_frac = 0.8;
  std::size_t test_count = 500;
  /// Generate for at most this many test hate speeches (seeded sample).
  std::optional<std::size_t> max_test_hate;
};

struct ScorerSpec {
  /// "stub" selects the in-process stub service; otherwise an http(s) base URL.
  std::optional<std::string> url;
  ScorerOptions options;
};

struct MiningSpec {
  std::size_t prefix_len = 4;
  std::size_t top_n = 10;  // frequency prompts per type
  ClusterMiningOptions cluster;
};

/// Declarative run description. Relative paths are resolved against the
/// directory of the config file.
struct RunConfig {
  std::uint64_t seed = 0;
  std::vector<DatasetSpec> datasets;
  std::optional<std::filesystem::path> typed_corpus;
  double prompt_frac = 0.3;
  std::optional<std::filesystem::path> manual_prompts;  // built-in registry when absent
  std::vector<BackendDescriptor> backends;
  DecodingConfig decoding;
  std::vector<PromptStrategy> strategies;  // prompted strategies; the baseline always runs
  std::vector<CsType> types{kAllCsTypes.begin(), kAllCsTypes.end()};
  ScorerSpec scorer;
  MiningSpec mining;
  std::size_t parallel_width = 4;
  std::filesystem::path out = "run";

  /// Throws InvalidArgument; checks that every referenced path exists.
  void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const RunConfig& config);

/// Hash of the config with every input path replaced by a hash of the file's
/// contents, so that equal inputs give equal hashes wherever they live.
std::string config_hash(const RunConfig& config);

/// Null when the config disables scoring.
std::unique_ptr<ScorerClient> make_scorer_client(const ScorerSpec& spec);

/// hate_key -> every counterspeech paired with that hate speech.
std::map<std::string, std::vector<std::string>> build_references(std::span<const CsPair> pairs);

/// One request per (hate speech, strategy, type) plus one baseline request per
/// hate speech. Prompts are drawn per request from a seed derived from its id.
std::vector<GenerationRequest> plan_requests(
    DatasetId dataset, const std::string& backend_id, std::span<const std::string> hate_speech,
    const std::map<PromptStrategy, PromptRegistry>& prompts,
    std::span<const PromptStrategy> strategies, std::span<const CsType> types,
    const DecodingConfig& decoding, std::uint64_t seed);

void write_prompt_sets(const std::filesystem::path& path, const PromptRegistry& sets);
PromptRegistry read_prompt_sets(const std::filesystem::path& path);

void write_rows_jsonl(const std::filesystem::path& path, std::span<const MetricRow> rows);
std::vector<MetricRow> read_rows_jsonl(const std::filesystem::path& path);

inline constexpr std::array<std::string_view, 6> kStages = {"ingest",   "split", "mine",
                                                            "generate", "score", "report"};

struct PipelineOptions {
  bool resume = false;
  std::ostream* log = nullptr;
};

struct PipelineResult {
  int exit_code = 0;  // 0 success, 1 some records failed, 2 fatal
  std::string failed_stage;  // resume token on fatal errors
  std::string message;
  std::size_t n_records = 0;
  std::size_t n_failed = 0;
};

/// Runs every stage, persisting each stage's outputs and a manifest under
/// config.out. With resume set, stages already completed under the same
/// config hash are skipped.
PipelineResult run_pipeline(const RunConfig& config, const PipelineOptions& options = {});

}  // namespace cspeech
