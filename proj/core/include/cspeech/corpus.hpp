#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cspeech/types.hpp"

namespace cspeech {

struct CsPair {
  std::string hate_speech;
  std::string counterspeech;
  DatasetId dataset_id = DatasetId::kOther;
  std::uint64_t pair_id = 0;
};

/// Identity of a hate-speech text: trimmed, internal whitespace collapsed.
/// Two pairs with equal keys always land in the same partition of a split.
std::string hate_key(std::string_view hate_speech);

struct TypedCounterspeech {
  std::string text;
  CsType cs_type = CsType::kFacts;
  std::string source_id;
};

enum class Partition { kTrain, kValidation, kTest };

enum class SplitRule { kSmall8020, kLargeTest500, kStratified811, kPrompt3070 };

std::string_view to_string(SplitRule rule);
SplitRule parse_split_rule(std::string_view name);

/// Key-level train/validation/test assignment. Each list is sorted.
struct SplitManifest {
  SplitRule rule = SplitRule::kSmall8020;
  std::uint64_t seed = 0;
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;

  const std::vector<std::string>& part(Partition p) const;
};

nlohmann::ordered_json to_json(const SplitManifest& m);
SplitManifest split_manifest_from_json(const nlohmann::json& j);

struct ArgumentRecord {
  std::string text;
  std::string topic;
  Stance stance = Stance::kFor;

  friend bool operator==(const ArgumentRecord&, const ArgumentRecord&) = default;
};

enum class PairLabel { kSameStance, kOppositeStance };

struct ArgumentPair {
  ArgumentRecord first;
  ArgumentRecord second;
  PairLabel label = PairLabel::kSameStance;
};

// ---------------------------------------------------------------------------
// Ingestion

enum class InputFormat { kJsonl, kCsv };
enum class LoadMode { kPermissive, kStrict };

/// Picks the format from the file extension (.csv, otherwise JSONL).
InputFormat format_from_path(const std::filesystem::path& path);

struct RecordError {
  std::size_t line = 0;
  std::string message;
};

/// Records that loaded plus one diagnostic per rejected record. In strict mode
/// the first rejected record throws DataError instead.
template <typename T>
struct LoadResult {
  std::vector<T> items;
  std::vector<RecordError> errors;
};

LoadResult<CsPair> parse_pairs(std::string_view content, InputFormat format,
                               DatasetId dataset = DatasetId::kOther,
                               LoadMode mode = LoadMode::kPermissive);

/// Throws IoError when the file cannot be read.
LoadResult<CsPair> load_pairs(const std::filesystem::path& path, InputFormat format,
                              DatasetId dataset = DatasetId::kOther,
                              LoadMode mode = LoadMode::kPermissive);

// Typed records take their source_id from an "id" field when present and
// fall back to the record ordinal otherwise.
LoadResult<TypedCounterspeech> parse_typed(std::string_view content, InputFormat format,
                                           LoadMode mode = LoadMode::kPermissive);
LoadResult<TypedCounterspeech> load_typed(const std::filesystem::path& path, InputFormat format,
                                          LoadMode mode = LoadMode::kPermissive);

LoadResult<ArgumentRecord> parse_arguments(std::string_view content, InputFormat format,
                                           LoadMode mode = LoadMode::kPermissive);
LoadResult<ArgumentRecord> load_arguments(const std::filesystem::path& path, InputFormat format,
                                          LoadMode mode = LoadMode::kPermissive);

/// Canonical JSONL: one {"pair_id","dataset","hate_speech","counterspeech"} object per line.
void write_pairs_jsonl(std::ostream& out, std::span<const CsPair> pairs);

// ---------------------------------------------------------------------------
// Statistics and splits

struct DatasetStats {
  std::size_t n_pairs = 0;
  std::size_t n_unique_hate = 0;
  double avg_cs_len = 0.0;  // mean whitespace tokens, rounded to 2 decimals
};

DatasetStats dataset_stats(std::span<const CsPair> pairs);

/// Seeded shuffle of the unique hate keys; the first floor(train_frac * n)
/// keys are train, the next floor(validation_frac * n) validation, the rest test.
SplitManifest split_small(std::span<const CsPair> pairs, double train_frac, std::uint64_t seed,
                          double validation_frac = 0.0);

/// Seeded uniform sample of test_count unique hate keys as test; the rest train.
SplitManifest split_large(std::span<const CsPair> pairs, std::size_t test_count,
                          std::uint64_t seed);

/// Pairs whose hate key belongs to the given partition, in input order.
std::vector<CsPair> select_pairs(std::span<const CsPair> pairs, const SplitManifest& manifest,
                                 Partition part);

/// Largest-remainder apportionment of n items over the weights; ties go to the
/// earlier weight. The result sums to n.
std::vector<std::size_t> apportion(std::size_t n, std::span<const double> weights);

/// Per-class 8:1:1 split of uniquely keyed items.
SplitManifest stratified_split(std::span<const std::string> keys,
                               std::span<const std::string> classes, std::uint64_t seed);

struct TypeCorpusSplit {
  std::vector<TypedCounterspeech> prompting;
  /// Rule PROMPT_30_70: train lists the prompting ids, test the classification ids.
  SplitManifest prompt_manifest;
  /// Rule STRATIFIED_8_1_1 over the classification remainder.
  SplitManifest classification;
};

/// Per type, round-half-up(prompt_frac * n) items go to prompting; the remainder
/// is split 8:1:1 per type. Every type needs at least 10 items.
TypeCorpusSplit split_type_corpus(std::span<const TypedCounterspeech> items, double prompt_frac,
                                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// Classifier corpora

struct SourcedText {
  std::string text;
  std::string source_id;
};

enum class CsLabel { kCs, kNotCs };

struct LabeledText {
  std::string text;
  std::string source_id;
  CsLabel label = CsLabel::kCs;
};

struct CsClassificationCorpus {
  std::vector<LabeledText> items;
  std::size_t n_cs = 0;
  std::size_t n_not_cs = 0;
};

/// Hostile counterspeech is moved to the non-counterspeech side.
CsClassificationCorpus build_cs_classification_corpus(std::span<const SourcedText> counter,
                                                      std::span<const SourcedText> non_counter,
                                                      std::span<const SourcedText> hostile);

/// Per topic (sorted by name), samples without replacement n_same same-stance and
/// n_opposite opposite-stance pairs out of all unordered argument pairs.
std::vector<ArgumentPair> build_argument_pairs(std::span<const ArgumentRecord> args,
                                               std::size_t n_same_per_topic,
                                               std::size_t n_opposite_per_topic,
                                               std::uint64_t seed);

}  // namespace cspeech
