#include "cspeech/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <memory>
#include <numeric>
#include <set>
#include <unordered_set>

#include "cspeech/corpus.hpp"
#include "cspeech/csv.hpp"
#include "cspeech/random.hpp"
#include "cspeech/text_util.hpp"

namespace cspeech {
namespace {

using ojson = nlohmann::ordered_json;

ojson opt(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

double clamp_unit(double r) { return std::clamp(r, -1.0, 1.0); }

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw InvalidArgument("correlation undefined for a constant vector");
  return clamp_unit(sxy / std::sqrt(sxx * syy));
}

std::optional<double> best_ok(std::span<const ScoreResponse> responses) {
  std::optional<double> best;
  for (const auto& r : responses) {
    if (r.ok() && r.value && (!best || *r.value > *best)) best = r.value;
  }
  return best;
}

std::optional<double>* column_for(MetricRow& row, ScoreKind kind) {
  switch (kind) {
    case ScoreKind::kCounterspeech: return &row.cs;
    case ScoreKind::kArgument: return &row.arg;
    case ScoreKind::kCounterargument: return &row.c_arg;
    case ScoreKind::kToxicity: return &row.tox;
    case ScoreKind::kLearnedRef: return &row.learned_ref;
    case ScoreKind::kEngageUpdown: return &row.engage_updown;
    case ScoreKind::kEngageWidth: return &row.engage_width;
    case ScoreKind::kEngageDepth: return &row.engage_depth;
    case ScoreKind::kTypeDist: return nullptr;
  }
  return nullptr;
}

}  // namespace

std::optional<double> MetricRow::metric(std::string_view name) const {
  if (name == "gleu") return gleu;
  if (name == "meteor") return meteor;
  if (name == "diversity") return diversity_contrib;
  if (name == "novelty") return novelty;
  if (name == "bleurt") return learned_ref;
  if (name == "cs") return cs;
  if (name == "c_arg") return c_arg;
  if (name == "arg") return arg;
  if (name == "tox") return tox;
  if (name == "fre") return flesch;
  if (name == "engage_updown") return engage_updown;
  if (name == "engage_width") return engage_width;
  if (name == "engage_depth") return engage_depth;
  throw InvalidArgument("unknown metric '" + std::string(name) + "'");
}

nlohmann::ordered_json to_json(const MetricRow& row) {
  ojson j;
  j["record_id"] = row.record_id;
  j["dataset"] = to_string(row.dataset);
  j["backend_id"] = row.backend_id;
  j["strategy"] = to_string(row.strategy);
  j["cs_type"] = row.cs_type ? ojson(to_string(*row.cs_type)) : ojson(nullptr);
  j["gleu"] = row.gleu;
  j["meteor"] = row.meteor;
  j["diversity"] = opt(row.diversity_contrib);
  j["novelty"] = row.novelty;
  j["fre"] = row.flesch;
  j["bleurt"] = opt(row.learned_ref);
  j["cs"] = opt(row.cs);
  j["arg"] = opt(row.arg);
  j["c_arg"] = opt(row.c_arg);
  j["tox"] = opt(row.tox);
  j["engage_updown"] = opt(row.engage_updown);
  j["engage_width"] = opt(row.engage_width);
  j["engage_depth"] = opt(row.engage_depth);
  if (row.type_dist) {
    ojson d;
    for (CsType t : kCsTypesAlphabetical) d[std::string(to_string(t))] = (*row.type_dist)[index_of(t)];
    j["type_dist"] = std::move(d);
  } else {
    j["type_dist"] = nullptr;
  }
  return j;
}

MetricRow metric_row_from_json(const nlohmann::json& j) {
  try {
    MetricRow row;
    row.record_id = j.at("record_id").get<std::string>();
    row.dataset = parse_dataset_id(j.at("dataset").get<std::string>());
    row.backend_id = j.at("backend_id").get<std::string>();
    row.strategy = parse_strategy(j.at("strategy").get<std::string>());
    if (!j.at("cs_type").is_null()) row.cs_type = parse_cs_type(j.at("cs_type").get<std::string>());
    row.gleu = j.at("gleu").get<double>();
    row.meteor = j.at("meteor").get<double>();
    row.diversity_contrib = opt_from(j, "diversity");
    row.novelty = j.at("novelty").get<double>();
    row.flesch = j.at("fre").get<double>();
    row.learned_ref = opt_from(j, "bleurt");
    row.cs = opt_from(j, "cs");
    row.arg = opt_from(j, "arg");
    row.c_arg = opt_from(j, "c_arg");
    row.tox = opt_from(j, "tox");
    row.engage_updown = opt_from(j, "engage_updown");
    row.engage_width = opt_from(j, "engage_width");
    row.engage_depth = opt_from(j, "engage_depth");
    if (j.contains("type_dist") && !j.at("type_dist").is_null()) {
      TypeDistribution d{};
      for (const auto& [name, p] : j.at("type_dist").items()) {
        d[index_of(parse_cs_type(name))] = p.get<double>();
      }
      row.type_dist = d;
    }
    return row;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metric row: ") + e.what());
  }
}

MetricReport aggregate(std::span<const MetricRow> rows, bool by_type) {
  std::map<GroupKey, std::pair<std::size_t, std::map<std::string, std::vector<double>>>> groups;
  for (const auto& row : rows) {
    GroupKey key{row.dataset, row.backend_id, row.strategy,
                 by_type ? row.cs_type : std::optional<CsType>{}};
    auto& [count, values] = groups[key];
    ++count;
    for (auto name : kMetricNames) {
      if (auto v = row.metric(name)) values[std::string(name)].push_back(*v);
    }
  }
  MetricReport report;
  for (auto& [key, entry] : groups) {
    GroupSummary g;
    g.key = key;
    g.n_rows = entry.first;
    for (auto& [name, values] : entry.second) {
      // Summing in sorted order makes the mean independent of row order.
      std::sort(values.begin(), values.end());
      const double sum = std::accumulate(values.begin(), values.end(), 0.0);
      g.means[name] = {sum / static_cast<double>(values.size()), values.size()};
    }
    report.groups.push_back(std::move(g));
  }
  return report;
}

Evaluation evaluate_vanilla(std::span<const GenerationRecord> records,
                            const std::map<std::string, std::vector<std::string>>& references,
                            const std::map<DatasetId, std::vector<TokenSequence>>& novelty_corpora,
                            ScorerClient* scorer, const std::optional<Capabilities>& capabilities,
                            const EvaluationOptions& options) {
  Evaluation out;
  std::vector<const GenerationRecord*> kept;
  std::vector<const std::vector<std::string>*> kept_refs;
  std::vector<TokenSequence> kept_tokens;

  for (const auto& rec : records) {
    const std::string& id = rec.request.request_id;
    if (!rec.ok()) {
      out.excluded.push_back({id, "generation failed: " + *rec.error});
      continue;
    }
    const auto ref_it = references.find(hate_key(rec.request.hate_speech));
    if (ref_it == references.end() || ref_it->second.empty()) {
      out.excluded.push_back({id, "no reference counterspeech for its hate speech"});
      continue;
    }
    const auto corpus_it = novelty_corpora.find(rec.request.dataset);
    if (corpus_it == novelty_corpora.end() || corpus_it->second.empty()) {
      throw InvalidArgument("evaluate_vanilla: no novelty corpus for dataset " +
                            std::string(to_string(rec.request.dataset)));
    }
    TokenSequence hyp = tokenize(rec.output);
    if (hyp.empty()) {
      out.excluded.push_back({id, "output has no words"});
      continue;
    }

    MetricRow row;
    row.record_id = id;
    row.dataset = rec.request.dataset;
    row.backend_id = rec.backend_id;
    row.strategy = rec.request.strategy;
    row.cs_type = rec.request.cs_type;
    for (const auto& ref : ref_it->second) {
      const TokenSequence r = tokenize(ref);
      row.gleu = std::max(row.gleu, gleu(hyp, r));
      row.meteor = std::max(row.meteor, meteor_lite(hyp, r));
    }
    row.novelty = novelty(hyp, corpus_it->second);
    row.flesch = flesch_reading_ease(rec.output);
    out.rows.push_back(std::move(row));
    kept.push_back(&rec);
    kept_refs.push_back(&ref_it->second);
    kept_tokens.push_back(std::move(hyp));
  }

  // Diversity within each (dataset, backend, strategy) group.
  std::map<GroupKey, std::vector<std::size_t>> div_groups;
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    const auto& r = out.rows[i];
    div_groups[{r.dataset, r.backend_id, r.strategy, std::nullopt}].push_back(i);
  }
  for (const auto& [key, members] : div_groups) {
    if (members.size() < 2) continue;
    std::vector<TokenSequence> group;
    for (auto i : members) group.push_back(kept_tokens[i]);
    const auto contrib = diversity_contributions(group);
    for (std::size_t m = 0; m < members.size(); ++m) out.rows[members[m]].diversity_contrib = contrib[m];
  }

  if (scorer && options.use_scorer && !out.rows.empty()) {
    if (!capabilities) throw InvalidArgument("evaluate_vanilla: scorer given without capabilities");
    for (ScoreKind kind : kAllScoreKinds) {
      if (!capabilities->supports(kind)) {
        out.notes.push_back("scorer does not serve " + std::string(to_string(kind)) +
                            "; column left absent");
        continue;
      }
      std::vector<ScoreRequest> reqs;
      std::vector<std::size_t> owner;
      for (std::size_t i = 0; i < kept.size(); ++i) {
        const auto& rec = *kept[i];
        if (kind == ScoreKind::kLearnedRef) {
          for (const auto& ref : *kept_refs[i]) {
            reqs.push_back({kind, rec.output, ref, "learned_ref"});
            owner.push_back(i);
          }
        } else {
          std::optional<std::string> context;
          if (requires_context(kind)) context = rec.request.hate_speech;
          reqs.push_back({kind, rec.output, context, std::string(to_string(kind))});
          owner.push_back(i);
        }
      }
      const auto responses = scorer->score(reqs);
      std::size_t failures = 0;
      for (std::size_t start = 0; start < responses.size();) {
        std::size_t end = start;
        while (end < responses.size() && owner[end] == owner[start]) ++end;
        MetricRow& row = out.rows[owner[start]];
        const auto slice = std::span(responses).subspan(start, end - start);
        if (kind == ScoreKind::kTypeDist) {
          if (slice[0].ok() && slice[0].distribution) {
            row.type_dist = slice[0].distribution;
          } else {
            ++failures;
          }
        } else if (auto best = best_ok(slice)) {
          *column_for(row, kind) = best;
        } else {
          ++failures;
        }
        start = end;
      }
      if (failures) {
        out.notes.push_back(std::to_string(failures) + " record(s) lack " +
                            std::string(to_string(kind)) + ": scorer reported item errors");
      }
    }
  }

  out.report = aggregate(out.rows, false);
  return out;
}

Argmax type_argmax(const TypeDistribution& dist) {
  Argmax best{kCsTypesAlphabetical[0], false};
  double top = dist[index_of(best.type)];
  for (std::size_t i = 1; i < kCsTypesAlphabetical.size(); ++i) {
    const CsType t = kCsTypesAlphabetical[i];
    const double p = dist[index_of(t)];
    if (p > top) {
      top = p;
      best = {t, false};
    } else if (p == top) {
      best.tie = true;
    }
  }
  return best;
}

TypePrecision type_precision(std::span<const TypeDistribution> dists, CsType intended) {
  if (dists.empty()) throw InvalidArgument("type_precision: empty record set");
  TypePrecision out;
  out.n = dists.size();
  for (const auto& d : dists) {
    const auto a = type_argmax(d);
    out.hits += a.type == intended ? 1 : 0;
    out.ties += a.tie ? 1 : 0;
  }
  out.precision = static_cast<double>(out.hits) / static_cast<double>(out.n);
  return out;
}

PrecisionGrid type_precision_grid(std::span<const MetricRow> rows) {
  std::map<PrecisionGridKey, std::map<std::optional<CsType>, std::vector<TypeDistribution>>> by_key;
  for (const auto& row : rows) {
    if (!row.type_dist) continue;
    by_key[{row.dataset, row.backend_id, row.strategy}][row.cs_type].push_back(*row.type_dist);
  }
  PrecisionGrid grid;
  for (const auto& [key, per_type] : by_key) {
    auto& cells = grid[key];
    for (const auto& [type, dists] : per_type) {
      if (type) {
        cells[*type] = type_precision(dists, *type);
      } else {
        for (CsType t : kAllCsTypes) cells[t] = type_precision(dists, t);
      }
    }
  }
  return grid;
}

std::vector<TailSample> tail_sample(std::span<const MetricRow> rows, std::string_view metric,
                                    std::size_t n_per_tail, std::uint64_t seed) {
  if (n_per_tail == 0) throw InvalidArgument("tail_sample: n_per_tail must be >= 1");
  std::vector<std::pair<double, std::string>> present;
  for (const auto& row : rows) {
    if (auto v = row.metric(metric)) present.emplace_back(*v, row.record_id);
  }
  if (present.size() < 2 * n_per_tail) {
    throw InvalidArgument("tail_sample: " + std::to_string(present.size()) + " rows carry '" +
                          std::string(metric) + "', need " + std::to_string(2 * n_per_tail));
  }
  std::sort(present.begin(), present.end());
  std::vector<TailSample> out;
  for (std::size_t i = 0; i < n_per_tail; ++i) {
    out.push_back({present[i].second, present[i].first, Tail::kLow});
  }
  for (std::size_t i = present.size() - n_per_tail; i < present.size(); ++i) {
    out.push_back({present[i].second, present[i].first, Tail::kHigh});
  }
  Rng rng(derive_seed(seed, "tail_sample"));
  rng.shuffle(std::span(out));
  return out;
}

double point_biserial(std::span<const bool> group_flags, std::span<const double> ratings) {
  if (group_flags.size() != ratings.size()) {
    throw InvalidArgument("point_biserial: flags and ratings differ in length");
  }
  double sum1 = 0.0, sum0 = 0.0;
  std::size_t n1 = 0, n0 = 0;
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    if (!std::isfinite(ratings[i])) throw InvalidArgument("point_biserial: non-finite rating");
    (group_flags[i] ? sum1 : sum0) += ratings[i];
    ++(group_flags[i] ? n1 : n0);
  }
  if (n1 == 0 || n0 == 0) throw InvalidArgument("point_biserial: both groups must be non-empty");
  const double n = static_cast<double>(ratings.size());
  const double mean = (sum1 + sum0) / n;
  double var = 0.0;
  for (double r : ratings) var += (r - mean) * (r - mean);
  var /= n;
  if (var == 0.0) throw InvalidArgument("point_biserial: ratings have zero variance");
  const double p = static_cast<double>(n1) / n;
  const double m1 = sum1 / static_cast<double>(n1);
  const double m0 = sum0 / static_cast<double>(n0);
  return clamp_unit((m1 - m0) / std::sqrt(var) * std::sqrt(p * (1.0 - p)));
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("spearman: inputs differ in length");
  if (x.size() < 3) throw InvalidArgument("spearman: need at least 3 pairs");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw InvalidArgument("spearman: non-finite input");
    }
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

std::vector<HumanRating> parse_ratings_csv(std::string_view content) {
  std::vector<HumanRating> out;
  std::unordered_set<std::string> seen;
  const auto rows = csv::parse(content);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() == 1 && trim(row.fields[0]).empty()) continue;
    if (row.fields.size() != 2) {
      throw DataError("ratings line " + std::to_string(row.line) + ": expected record_id,rating");
    }
    const auto id = std::string(trim(row.fields[0]));
    const auto value = trim(row.fields[1]);
    int rating = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), rating);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
      if (r == 0) continue;  // header
      throw DataError("ratings line " + std::to_string(row.line) + ": rating '" +
                      std::string(value) + "' is not an integer");
    }
    if (rating < 1 || rating > 5) {
      throw DataError("ratings line " + std::to_string(row.line) + ": rating " +
                      std::to_string(rating) + " outside 1..5");
    }
    if (id.empty()) throw DataError("ratings line " + std::to_string(row.line) + ": empty record id");
    if (!seen.insert(id).second) {
      throw DataError("ratings line " + std::to_string(row.line) + ": duplicate record id '" + id + "'");
    }
    out.push_back({id, rating});
  }
  return out;
}

Correlation correlate(std::span<const TailSample> samples, std::span<const HumanRating> ratings,
                      std::string_view metric) {
  std::map<std::string, int> by_id;
  for (const auto& r : ratings) by_id[r.record_id] = r.rating;
  Correlation out;
  out.metric = std::string(metric);
  std::vector<std::pair<std::string, const TailSample*>> ordered;
  for (const auto& s : samples) ordered.emplace_back(s.record_id, &s);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // std::vector<bool> is not contiguous, so the flags live in a plain array.
  auto flags = std::make_unique<bool[]>(ordered.size());
  std::vector<double> values, rated;
  for (const auto& [id, s] : ordered) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      out.unrated.push_back(id);
      continue;
    }
    flags[rated.size()] = s->tail == Tail::kHigh;
    values.push_back(s->value);
    rated.push_back(static_cast<double>(it->second));
  }
  out.n = rated.size();
  out.point_biserial = point_biserial(std::span<const bool>(flags.get(), rated.size()), rated);
  out.spearman = spearman(values, rated);
  return out;
}

}  // namespace cspeech
