#include "cspeech/types.hpp"

#include "cspeech/error.hpp"
#include "cspeech/text_util.hpp"

#include <string>

namespace cspeech {

std::string_view to_string(CsType t) {
  switch (t) {
    case CsType::kHypocrisy: return "hypocrisy";
    case CsType::kDenouncing: return "denouncing";
    case CsType::kHumor: return "humor";
    case CsType::kFacts: return "facts";
    case CsType::kAffiliation: return "affiliation";
    case CsType::kQuestion: return "question";
  }
  return "unknown";
}

std::string_view to_string(DatasetId d) {
  switch (d) {
    case DatasetId::kConan: return "CONAN";
    case DatasetId::kConanMt: return "CONAN_MT";
    case DatasetId::kReddit: return "REDDIT";
    case DatasetId::kGab: return "GAB";
    case DatasetId::kOther: return "OTHER";
  }
  return "OTHER";
}

std::string_view to_string(Stance s) { return s == Stance::kFor ? "for" : "against"; }

std::string_view to_string(PromptStrategy s) {
  switch (s) {
    case PromptStrategy::kManual: return "manual";
    case PromptStrategy::kFrequency: return "freq";
    case PromptStrategy::kCluster: return "cluster";
    case PromptStrategy::kNone: return "none";
  }
  return "none";
}

std::string_view table_label(PromptStrategy s) {
  return s == PromptStrategy::kNone ? "base" : to_string(s);
}

std::string_view to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::kCounterspeech: return "counterspeech";
    case ScoreKind::kArgument: return "argument";
    case ScoreKind::kCounterargument: return "counterargument";
    case ScoreKind::kToxicity: return "toxicity";
    case ScoreKind::kTypeDist: return "type_dist";
    case ScoreKind::kLearnedRef: return "learned_ref";
    case ScoreKind::kEngageUpdown: return "engage_updown";
    case ScoreKind::kEngageWidth: return "engage_width";
    case ScoreKind::kEngageDepth: return "engage_depth";
  }
  return "unknown";
}

CsType parse_cs_type(std::string_view name) {
  const std::string n = to_lower_ascii(trim(name));
  for (CsType t : kAllCsTypes) {
    if (n == to_string(t)) return t;
  }
  if (n == "humour") return CsType::kHumor;
  if (n == "questions") return CsType::kQuestion;
  if (n == "fact") return CsType::kFacts;
  throw InvalidArgument("unknown counterspeech type: '" + std::string(name) + "'");
}

DatasetId parse_dataset_id(std::string_view name) {
  std::string n = to_lower_ascii(trim(name));
  for (char& c : n) {
    if (c == '-') c = '_';
  }
  if (n == "conan") return DatasetId::kConan;
  if (n == "conan_mt" || n == "multitarget_conan") return DatasetId::kConanMt;
  if (n == "reddit") return DatasetId::kReddit;
  if (n == "gab") return DatasetId::kGab;
  if (n == "other") return DatasetId::kOther;
  throw InvalidArgument("unknown dataset id: '" + std::string(name) + "'");
}

Stance parse_stance(std::string_view name) {
  const std::string n = to_lower_ascii(trim(name));
  if (n == "for" || n == "pro") return Stance::kFor;
  if (n == "against" || n == "con") return Stance::kAgainst;
  throw InvalidArgument("unknown stance: '" + std::string(name) + "'");
}

PromptStrategy parse_strategy(std::string_view name) {
  const std::string n = to_lower_ascii(trim(name));
  if (n == "manual") return PromptStrategy::kManual;
  if (n == "freq" || n == "frequency") return PromptStrategy::kFrequency;
  if (n == "cluster" || n == "cluster_centered") return PromptStrategy::kCluster;
  if (n == "none" || n == "base") return PromptStrategy::kNone;
  throw InvalidArgument("unknown prompt strategy: '" + std::string(name) + "'");
}

std::optional<ScoreKind> try_parse_score_kind(std::string_view name) {
  const std::string n = to_lower_ascii(trim(name));
  for (ScoreKind k : kAllScoreKinds) {
    if (n == to_string(k)) return k;
  }
  return std::nullopt;
}

ScoreKind parse_score_kind(std::string_view name) {
  if (auto k = try_parse_score_kind(name)) return *k;
  throw InvalidArgument("unknown score kind: '" + std::string(name) + "'");
}

}  // namespace cspeech
