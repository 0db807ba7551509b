#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace cspeech {

enum class CsType { kHypocrisy, kDenouncing, kHumor, kFacts, kAffiliation, kQuestion };

inline constexpr std::size_t kNumCsTypes = 6;

inline constexpr std::array<CsType, kNumCsTypes> kAllCsTypes = {
    CsType::kHypocrisy, CsType::kDenouncing,  CsType::kHumor,
    CsType::kFacts,     CsType::kAffiliation, CsType::kQuestion};

// Alphabetical by name; used wherever a deterministic tie-break between types is needed.
inline constexpr std::array<CsType, kNumCsTypes> kCsTypesAlphabetical = {
    CsType::kAffiliation, CsType::kDenouncing, CsType::kFacts,
    CsType::kHumor,       CsType::kHypocrisy,  CsType::kQuestion};

constexpr std::size_t index_of(CsType t) { return static_cast<std::size_t>(t); }

/// Per-type probability mass, indexed by index_of(CsType).
using TypeDistribution = std::array<double, kNumCsTypes>;

enum class DatasetId { kConan, kConanMt, kReddit, kGab, kOther };

enum class Stance { kFor, kAgainst };

enum class PromptStrategy { kManual, kFrequency, kCluster, kNone };

enum class ScoreKind {
  kCounterspeech,
  kArgument,
  kCounterargument,
  kToxicity,
  kTypeDist,
  kLearnedRef,
  kEngageUpdown,
  kEngageWidth,
  kEngageDepth,
};

inline constexpr std::array<ScoreKind, 9> kAllScoreKinds = {
    ScoreKind::kCounterspeech, ScoreKind::kArgument,     ScoreKind::kCounterargument,
    ScoreKind::kToxicity,      ScoreKind::kTypeDist,     ScoreKind::kLearnedRef,
    ScoreKind::kEngageUpdown,  ScoreKind::kEngageWidth,  ScoreKind::kEngageDepth};

/// True for kinds that are scored against a context (hate speech or reference).
constexpr bool requires_context(ScoreKind k) {
  switch (k) {
    case ScoreKind::kCounterargument:
    case ScoreKind::kLearnedRef:
    case ScoreKind::kEngageUpdown:
    case ScoreKind::kEngageWidth:
    case ScoreKind::kEngageDepth:
      return true;
    default:
      return false;
  }
}

std::string_view to_string(CsType t);
std::string_view to_string(DatasetId d);
std::string_view to_string(Stance s);
std::string_view to_string(PromptStrategy s);
std::string_view to_string(ScoreKind k);

/// Column label used in report tables ("base" for the no-prompt strategy).
std::string_view table_label(PromptStrategy s);

// Parsers are case-insensitive and accept common aliases ("humour", "questions",
// "base"). They throw InvalidArgument on unknown names.
CsType parse_cs_type(std::string_view name);
DatasetId parse_dataset_id(std::string_view name);
Stance parse_stance(std::string_view name);
PromptStrategy parse_strategy(std::string_view name);
ScoreKind parse_score_kind(std::string_view name);

std::optional<ScoreKind> try_parse_score_kind(std::string_view name);

}  // namespace cspeech
