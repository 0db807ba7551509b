#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cspeech/generation.hpp"
#include "cspeech/scorer_client.hpp"
#include "cspeech/textmetrics.hpp"
#include "cspeech/types.hpp"

namespace cspeech {

/// Report columns in table order. The first five are computed locally.
inline constexpr std::array<std::string_view, 13> kMetricNames = {
    "gleu", "meteor", "diversity", "novelty", "bleurt",        "cs",          "c_arg",
    "arg",  "tox",    "fre",       "engage_updown", "engage_width", "engage_depth"};

struct MetricRow {
  std::string record_id;
  DatasetId dataset = DatasetId::kOther;
  std::string backend_id;
  PromptStrategy strategy = PromptStrategy::kNone;
  std::optional<CsType> cs_type;

  double gleu = 0.0;
  double meteor = 0.0;
  std::optional<double> diversity_contrib;  // absent in a group of one
  double novelty = 0.0;
  double flesch = 0.0;
  std::optional<double> learned_ref;
  std::optional<double> cs;
  std::optional<double> arg;
  std::optional<double> c_arg;
  std::optional<double> tox;
  std::optional<double> engage_updown;
  std::optional<double> engage_width;
  std::optional<double> engage_depth;
  std::optional<TypeDistribution> type_dist;

  /// Value of a column from kMetricNames; nullopt when absent. Throws on an unknown name.
  std::optional<double> metric(std::string_view name) const;
};

nlohmann::ordered_json to_json(const MetricRow& row);
MetricRow metric_row_from_json(const nlohmann::json& j);

struct GroupKey {
  DatasetId dataset = DatasetId::kOther;
  std::string backend_id;
  PromptStrategy strategy = PromptStrategy::kNone;
  std::optional<CsType> cs_type;

  auto operator<=>(const GroupKey&) const = default;
};

struct MetricMean {
  double mean = 0.0;
  std::size_t n = 0;
};

struct GroupSummary {
  GroupKey key;
  std::size_t n_rows = 0;
  std::map<std::string, MetricMean> means;  // only metrics present in >= 1 row
};

struct MetricReport {
  std::vector<GroupSummary> groups;  // sorted by key
};

/// Means over the rows where each metric is present. With by_type false the
/// cs_type is dropped from the key. The result does not depend on row order.
MetricReport aggregate(std::span<const MetricRow> rows, bool by_type);

struct Exclusion {
  std::string record_id;
  std::string reason;
};

struct EvaluationOptions {
  /// Score with the service only for kinds it advertises.
  bool use_scorer = true;
};

struct Evaluation {
  std::vector<MetricRow> rows;  // in record order
  std::vector<Exclusion> excluded;
  MetricReport report;  // grouped without cs_type
  std::vector<std::string> notes;
};

/// references: hate_key(hate speech) -> reference counterspeech.
/// novelty_corpora: tokenized training-side counterspeech per dataset.
/// scorer may be null; missing capabilities leave their columns absent.
Evaluation evaluate_vanilla(std::span<const GenerationRecord> records,
                            const std::map<std::string, std::vector<std::string>>& references,
                            const std::map<DatasetId, std::vector<TokenSequence>>& novelty_corpora,
                            ScorerClient* scorer, const std::optional<Capabilities>& capabilities,
                            const EvaluationOptions& options = {});

/// The type with the highest mass; exact ties go to the alphabetically first type.
struct Argmax {
  CsType type = CsType::kAffiliation;
  bool tie = false;
};
Argmax type_argmax(const TypeDistribution& dist);

struct TypePrecision {
  double precision = 0.0;
  std::size_t n = 0;
  std::size_t hits = 0;
  std::size_t ties = 0;  // distributions whose argmax needed the tie-break
};

/// Fraction of distributions whose argmax is the intended type. Throws on an empty set.
TypePrecision type_precision(std::span<const TypeDistribution> dists, CsType intended);

struct PrecisionGridKey {
  DatasetId dataset = DatasetId::kOther;
  std::string backend_id;
  PromptStrategy strategy = PromptStrategy::kNone;

  auto operator<=>(const PrecisionGridKey&) const = default;
};

/// Per (dataset, backend, strategy): one cell per type. Prompted rows score the
/// records generated for that type; the untyped baseline row gives the share of
/// its records classified as each type.
using PrecisionGrid = std::map<PrecisionGridKey, std::map<CsType, TypePrecision>>;

PrecisionGrid type_precision_grid(std::span<const MetricRow> rows);

enum class Tail { kLow, kHigh };

struct TailSample {
  std::string record_id;
  double value = 0.0;
  Tail tail = Tail::kLow;
};

/// Rows lacking the metric are dropped; the rest are sorted by (value,
/// record_id) and the n lowest and n highest taken. The result is presented in
/// a seeded random order so annotators cannot infer the tail.
std::vector<TailSample> tail_sample(std::span<const MetricRow> rows, std::string_view metric,
                                    std::size_t n_per_tail, std::uint64_t seed);

/// (M1 - M0) / sigma * sqrt(p q), sigma the population standard deviation.
double point_biserial(std::span<const bool> group_flags, std::span<const double> ratings);

/// Pearson correlation of average ranks.
double spearman(std::span<const double> x, std::span<const double> y);

struct HumanRating {
  std::string record_id;
  int rating = 0;
};

/// CSV with columns record_id, rating (header optional). Ratings must be 1..5
/// and record ids unique.
std::vector<HumanRating> parse_ratings_csv(std::string_view content);

struct Correlation {
  std::string metric;
  std::size_t n = 0;  // rated samples used
  double point_biserial = 0.0;
  double spearman = 0.0;
  std::vector<std::string> unrated;  // sampled records without a rating
};

/// Tail membership (high = 1) against ratings, and metric value against ratings.
Correlation correlate(std::span<const TailSample> samples, std::span<const HumanRating> ratings,
                      std::string_view metric);

}  // namespace cspeech
