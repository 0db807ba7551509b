#include "cspeech/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cspeech/csv.hpp"
#include "cspeech/error.hpp"
#include "cspeech/random.hpp"
#include "cspeech/text_util.hpp"

namespace cspeech {
namespace {

using json = nlohmann::json;

// A record flattened to its string-valued fields.
struct RawRecord {
  std::size_t line = 0;
  std::map<std::string, std::string, std::less<>> fields;
  std::optional<std::string> parse_error;

  std::optional<std::string> get(std::string_view name) const {
    auto it = fields.find(name);
    if (it == fields.end()) return std::nullopt;
    return it->second;
  }
};

std::vector<RawRecord> read_raw(std::string_view content, InputFormat format) {
  std::vector<RawRecord> out;
  if (format == InputFormat::kJsonl) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= content.size()) {
      const std::size_t nl = content.find('\n', pos);
      const std::string_view line =
          content.substr(pos, nl == std::string_view::npos ? content.size() - pos : nl - pos);
      ++line_no;
      pos = nl == std::string_view::npos ? content.size() + 1 : nl + 1;
      if (trim(line).empty()) continue;
      RawRecord rec;
      rec.line = line_no;
      try {
        const json j = json::parse(line);
        if (!j.is_object()) {
          rec.parse_error = "record is not a JSON object";
        } else {
          for (const auto& [key, value] : j.items()) {
            if (value.is_string()) {
              rec.fields.emplace(key, value.get<std::string>());
            } else if (value.is_number_integer()) {
              rec.fields.emplace(key, std::to_string(value.get<long long>()));
            }
          }
        }
      } catch (const json::parse_error& e) {
        rec.parse_error = std::string("invalid JSON: ") + e.what();
      }
      out.push_back(std::move(rec));
    }
    return out;
  }

  const auto rows = csv::parse(content);
  if (rows.empty()) return out;
  const auto& header = rows.front().fields;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    RawRecord rec;
    rec.line = rows[r].line;
    if (rows[r].fields.size() != header.size()) {
      rec.parse_error = "expected " + std::to_string(header.size()) + " fields, found " +
                        std::to_string(rows[r].fields.size());
    } else {
      for (std::size_t c = 0; c < header.size(); ++c) {
        rec.fields.emplace(std::string(trim(header[c])), rows[r].fields[c]);
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error while reading file: " + path.string());
  return ss.str();
}

// Drives one loader: converts each raw record with `convert`, which returns an
// error message or fills the item.
template <typename T, typename Convert>
LoadResult<T> load_records(std::string_view content, InputFormat format, LoadMode mode,
                           Convert convert) {
  LoadResult<T> result;
  for (const RawRecord& rec : read_raw(content, format)) {
    std::optional<std::string> err = rec.parse_error;
    T item{};
    if (!err) err = convert(rec, item);
    if (err) {
      if (mode == LoadMode::kStrict) {
        throw DataError("line " + std::to_string(rec.line) + ": " + *err);
      }
      result.errors.push_back({rec.line, *err});
      continue;
    }
    result.items.push_back(std::move(item));
  }
  return result;
}

std::optional<std::string> require_text(const RawRecord& rec, std::string_view name,
                                        std::string& out) {
  auto v = rec.get(name);
  if (!v) return "missing field \"" + std::string(name) + "\"";
  if (trim(*v).empty()) return "field \"" + std::string(name) + "\" is empty";
  out = std::move(*v);
  return std::nullopt;
}

std::vector<std::string> unique_sorted_keys(std::span<const CsPair> pairs) {
  std::set<std::string> keys;
  for (const auto& p : pairs) keys.insert(hate_key(p.hate_speech));
  return {keys.begin(), keys.end()};
}

void sort_parts(SplitManifest& m) {
  std::sort(m.train.begin(), m.train.end());
  std::sort(m.validation.begin(), m.validation.end());
  std::sort(m.test.begin(), m.test.end());
}

std::size_t round_half_up(double x) {
  // The epsilon absorbs representation error in products like 0.3 * 5.
  return static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9));
}

// Floyd's algorithm: `count` distinct values from [0, range), sorted.
std::vector<std::uint64_t> sample_distinct(std::uint64_t range, std::size_t count, Rng& rng) {
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(count * 2);
  for (std::uint64_t j = range - count; j < range; ++j) {
    const std::uint64_t t = rng.below(j + 1);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  std::vector<std::uint64_t> out(chosen.begin(), chosen.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t choose2(std::uint64_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

// Maps t in [0, C(n,2)) to the t-th pair (i < j) in row-major order.
std::pair<std::size_t, std::size_t> decode_triangular(std::uint64_t t, std::size_t n) {
  std::size_t i = 0;
  std::uint64_t row = n - 1;
  while (t >= row) {
    t -= row;
    ++i;
    --row;
  }
  return {i, i + 1 + static_cast<std::size_t>(t)};
}

}  // namespace

std::string hate_key(std::string_view hate_speech) { return normalize_whitespace(hate_speech); }

std::string_view to_string(SplitRule rule) {
  switch (rule) {
    case SplitRule::kSmall8020: return "SMALL_80_20";
    case SplitRule::kLargeTest500: return "LARGE_TEST_500";
    case SplitRule::kStratified811: return "STRATIFIED_8_1_1";
    case SplitRule::kPrompt3070: return "PROMPT_30_70";
  }
  return "SMALL_80_20";
}

SplitRule parse_split_rule(std::string_view name) {
  for (SplitRule r : {SplitRule::kSmall8020, SplitRule::kLargeTest500, SplitRule::kStratified811,
                      SplitRule::kPrompt3070}) {
    if (name == to_string(r)) return r;
  }
  throw InvalidArgument("unknown split rule: '" + std::string(name) + "'");
}

const std::vector<std::string>& SplitManifest::part(Partition p) const {
  switch (p) {
    case Partition::kTrain: return train;
    case Partition::kValidation: return validation;
    case Partition::kTest: return test;
  }
  return test;
}

nlohmann::ordered_json to_json(const SplitManifest& m) {
  nlohmann::ordered_json j;
  j["rule"] = to_string(m.rule);
  j["seed"] = m.seed;
  j["train"] = m.train;
  j["validation"] = m.validation;
  j["test"] = m.test;
  return j;
}

SplitManifest split_manifest_from_json(const nlohmann::json& j) {
  try {
    SplitManifest m;
    m.rule = parse_split_rule(j.at("rule").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.train = j.at("train").get<std::vector<std::string>>();
    m.validation = j.value("validation", std::vector<std::string>{});
    m.test = j.at("test").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed split manifest: ") + e.what());
  }
}

InputFormat format_from_path(const std::filesystem::path& path) {
  return to_lower_ascii(path.extension().string()) == ".csv" ? InputFormat::kCsv
                                                             : InputFormat::kJsonl;
}

LoadResult<CsPair> parse_pairs(std::string_view content, InputFormat format, DatasetId dataset,
                               LoadMode mode) {
  auto result = load_records<CsPair>(
      content, format, mode, [&](const RawRecord& rec, CsPair& p) -> std::optional<std::string> {
        if (auto e = require_text(rec, "hate_speech", p.hate_speech)) return e;
        if (auto e = require_text(rec, "counterspeech", p.counterspeech)) return e;
        p.dataset_id = dataset;
        return std::nullopt;
      });
  for (std::size_t i = 0; i < result.items.size(); ++i) result.items[i].pair_id = i;
  return result;
}

LoadResult<CsPair> load_pairs(const std::filesystem::path& path, InputFormat format,
                              DatasetId dataset, LoadMode mode) {
  return parse_pairs(read_file(path), format, dataset, mode);
}

LoadResult<TypedCounterspeech> parse_typed(std::string_view content, InputFormat format,
                                           LoadMode mode) {
  std::size_t ordinal = 0;
  return load_records<TypedCounterspeech>(
      content, format, mode,
      [&](const RawRecord& rec, TypedCounterspeech& t) -> std::optional<std::string> {
        const std::size_t this_ordinal = ordinal++;
        if (auto e = require_text(rec, "text", t.text)) return e;
        std::string type_name;
        if (auto e = require_text(rec, "cs_type", type_name)) return e;
        try {
          t.cs_type = parse_cs_type(type_name);
        } catch (const InvalidArgument& e) {
          return std::string(e.what());
        }
        auto id = rec.get("id");
        t.source_id = id && !trim(*id).empty() ? std::string(trim(*id))
                                               : std::to_string(this_ordinal);
        return std::nullopt;
      });
}

LoadResult<TypedCounterspeech> load_typed(const std::filesystem::path& path, InputFormat format,
                                          LoadMode mode) {
  return parse_typed(read_file(path), format, mode);
}

LoadResult<ArgumentRecord> parse_arguments(std::string_view content, InputFormat format,
                                           LoadMode mode) {
  return load_records<ArgumentRecord>(
      content, format, mode,
      [&](const RawRecord& rec, ArgumentRecord& a) -> std::optional<std::string> {
        if (auto e = require_text(rec, "text", a.text)) return e;
        if (auto e = require_text(rec, "topic", a.topic)) return e;
        std::string stance;
        if (auto e = require_text(rec, "stance", stance)) return e;
        try {
          a.stance = parse_stance(stance);
        } catch (const InvalidArgument& e) {
          return std::string(e.what());
        }
        return std::nullopt;
      });
}

LoadResult<ArgumentRecord> load_arguments(const std::filesystem::path& path, InputFormat format,
                                          LoadMode mode) {
  return parse_arguments(read_file(path), format, mode);
}

void write_pairs_jsonl(std::ostream& out, std::span<const CsPair> pairs) {
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["pair_id"] = p.pair_id;
    j["dataset"] = to_string(p.dataset_id);
    j["hate_speech"] = p.hate_speech;
    j["counterspeech"] = p.counterspeech;
    out << j.dump() << '\n';
  }
}

DatasetStats dataset_stats(std::span<const CsPair> pairs) {
  if (pairs.empty()) throw InvalidArgument("dataset_stats: empty collection");
  DatasetStats s;
  s.n_pairs = pairs.size();
  std::unordered_set<std::string> keys;
  std::size_t tokens = 0;
  for (const auto& p : pairs) {
    keys.insert(hate_key(p.hate_speech));
    tokens += split_whitespace(p.counterspeech).size();
  }
  s.n_unique_hate = keys.size();
  const double mean = static_cast<double>(tokens) / static_cast<double>(pairs.size());
  s.avg_cs_len = std::round(mean * 100.0) / 100.0;
  return s;
}

SplitManifest split_small(std::span<const CsPair> pairs, double train_frac, std::uint64_t seed,
                          double validation_frac) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw InvalidArgument("split_small: train_frac must lie in (0, 1)");
  }
  if (validation_frac < 0.0 || train_frac + validation_frac >= 1.0) {
    throw InvalidArgument("split_small: validation_frac must be >= 0 and leave room for test");
  }
  std::vector<std::string> keys = unique_sorted_keys(pairs);
  if (keys.size() < 2) throw InvalidArgument("split_small: need at least 2 unique hate-speech keys");

  Rng rng(derive_seed(seed, "split_small"));
  rng.shuffle(std::span(keys));

  const auto n = static_cast<double>(keys.size());
  const auto n_train = static_cast<std::size_t>(std::floor(train_frac * n + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(validation_frac * n + 1e-9));

  SplitManifest m;
  m.rule = SplitRule::kSmall8020;
  m.seed = seed;
  m.train.assign(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n_train));
  m.validation.assign(keys.begin() + static_cast<std::ptrdiff_t>(n_train),
                      keys.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  m.test.assign(keys.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), keys.end());
  sort_parts(m);
  return m;
}

SplitManifest split_large(std::span<const CsPair> pairs, std::size_t test_count,
                          std::uint64_t seed) {
  std::vector<std::string> keys = unique_sorted_keys(pairs);
  if (keys.size() <= test_count) {
    throw InvalidArgument("split_large: " + std::to_string(keys.size()) +
                          " unique hate-speech keys, need more than " +
                          std::to_string(test_count));
  }
  Rng rng(derive_seed(seed, "split_large"));
  rng.shuffle(std::span(keys));

  SplitManifest m;
  m.rule = SplitRule::kLargeTest500;
  m.seed = seed;
  m.test.assign(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(test_count));
  m.train.assign(keys.begin() + static_cast<std::ptrdiff_t>(test_count), keys.end());
  sort_parts(m);
  return m;
}

std::vector<CsPair> select_pairs(std::span<const CsPair> pairs, const SplitManifest& manifest,
                                 Partition part) {
  const auto& keys = manifest.part(part);
  std::vector<CsPair> out;
  for (const auto& p : pairs) {
    if (std::binary_search(keys.begin(), keys.end(), hate_key(p.hate_speech))) out.push_back(p);
  }
  return out;
}

std::vector<std::size_t> apportion(std::size_t n, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw InvalidArgument("apportion: negative weight");
    total += w;
  }
  if (weights.empty() || total <= 0.0) throw InvalidArgument("apportion: weights sum to zero");

  std::vector<std::size_t> counts(weights.size());
  std::vector<double> remainders(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(n) * weights[i] / total;
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainders[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(weights.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b] + 1e-12; });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++counts[order[r % order.size()]];
  return counts;
}

SplitManifest stratified_split(std::span<const std::string> keys,
                               std::span<const std::string> classes, std::uint64_t seed) {
  if (keys.size() != classes.size()) {
    throw InvalidArgument("stratified_split: keys and classes differ in length");
  }
  std::map<std::string, std::vector<std::string>> by_class;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (!seen.insert(keys[i]).second) {
      throw DataError("stratified_split: duplicate key '" + keys[i] + "'");
    }
    by_class[classes[i]].push_back(keys[i]);
  }

  static constexpr std::array<double, 3> kWeights = {8.0, 1.0, 1.0};
  SplitManifest m;
  m.rule = SplitRule::kStratified811;
  m.seed = seed;
  for (auto& [cls, members] : by_class) {
    std::sort(members.begin(), members.end());
    Rng rng(derive_seed(seed, "stratified:" + cls));
    rng.shuffle(std::span(members));
    const auto counts = apportion(members.size(), kWeights);
    auto it = members.begin();
    m.train.insert(m.train.end(), it, it + static_cast<std::ptrdiff_t>(counts[0]));
    it += static_cast<std::ptrdiff_t>(counts[0]);
    m.validation.insert(m.validation.end(), it, it + static_cast<std::ptrdiff_t>(counts[1]));
    it += static_cast<std::ptrdiff_t>(counts[1]);
    m.test.insert(m.test.end(), it, members.end());
  }
  sort_parts(m);
  return m;
}

TypeCorpusSplit split_type_corpus(std::span<const TypedCounterspeech> items, double prompt_frac,
                                  std::uint64_t seed) {
  if (!(prompt_frac > 0.0 && prompt_frac < 1.0)) {
    throw InvalidArgument("split_type_corpus: prompt_frac must lie in (0, 1)");
  }
  std::array<std::vector<std::size_t>, kNumCsTypes> by_type;
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!ids.insert(items[i].source_id).second) {
      throw DataError("split_type_corpus: duplicate source_id '" + items[i].source_id + "'");
    }
    by_type[index_of(items[i].cs_type)].push_back(i);
  }
  for (CsType t : kAllCsTypes) {
    if (by_type[index_of(t)].size() < 10) {
      throw InvalidArgument("split_type_corpus: type '" + std::string(to_string(t)) + "' has " +
                            std::to_string(by_type[index_of(t)].size()) +
                            " items, need at least 10");
    }
  }

  TypeCorpusSplit out;
  out.prompt_manifest.rule = SplitRule::kPrompt3070;
  out.prompt_manifest.seed = seed;
  std::vector<std::string> rest_keys;
  std::vector<std::string> rest_classes;
  std::vector<std::size_t> prompting_idx;

  for (CsType t : kAllCsTypes) {
    auto members = by_type[index_of(t)];
    Rng rng(derive_seed(seed, "prompt_split:" + std::string(to_string(t))));
    rng.shuffle(std::span(members));
    const std::size_t n_prompt = round_half_up(prompt_frac * static_cast<double>(members.size()));
    for (std::size_t r = 0; r < members.size(); ++r) {
      const auto& item = items[members[r]];
      if (r < n_prompt) {
        prompting_idx.push_back(members[r]);
        out.prompt_manifest.train.push_back(item.source_id);
      } else {
        rest_keys.push_back(item.source_id);
        rest_classes.emplace_back(to_string(t));
        out.prompt_manifest.test.push_back(item.source_id);
      }
    }
  }
  std::sort(prompting_idx.begin(), prompting_idx.end());
  for (std::size_t i : prompting_idx) out.prompting.push_back(items[i]);
  sort_parts(out.prompt_manifest);
  out.classification = stratified_split(rest_keys, rest_classes, seed);
  return out;
}

CsClassificationCorpus build_cs_classification_corpus(std::span<const SourcedText> counter,
                                                      std::span<const SourcedText> non_counter,
                                                      std::span<const SourcedText> hostile) {
  std::unordered_set<std::string> ids;
  CsClassificationCorpus out;
  auto add = [&](std::span<const SourcedText> group, CsLabel label, std::string_view group_name) {
    for (const auto& s : group) {
      if (!ids.insert(s.source_id).second) {
        throw DataError("build_cs_classification_corpus: source_id '" + s.source_id +
                        "' from " + std::string(group_name) + " appears in more than one group");
      }
      out.items.push_back({s.text, s.source_id, label});
      (label == CsLabel::kCs ? out.n_cs : out.n_not_cs) += 1;
    }
  };
  add(counter, CsLabel::kCs, "counter");
  add(non_counter, CsLabel::kNotCs, "non_counter");
  add(hostile, CsLabel::kNotCs, "hostile");
  return out;
}

std::vector<ArgumentPair> build_argument_pairs(std::span<const ArgumentRecord> args,
                                               std::size_t n_same_per_topic,
                                               std::size_t n_opposite_per_topic,
                                               std::uint64_t seed) {
  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> topics;
  for (std::size_t i = 0; i < args.size(); ++i) {
    auto& [pro, con] = topics[args[i].topic];
    (args[i].stance == Stance::kFor ? pro : con).push_back(i);
  }

  std::vector<ArgumentPair> out;
  for (const auto& [topic, groups] : topics) {
    const auto& [pro, con] = groups;
    const std::uint64_t n_pro_pairs = choose2(pro.size());
    const std::uint64_t n_same = n_pro_pairs + choose2(con.size());
    const std::uint64_t n_opp = static_cast<std::uint64_t>(pro.size()) * con.size();
    if (n_same < n_same_per_topic) {
      throw InvalidArgument("build_argument_pairs: topic '" + topic + "' is short by " +
                            std::to_string(n_same_per_topic - n_same) + " same-stance pairs");
    }
    if (n_opp < n_opposite_per_topic) {
      throw InvalidArgument("build_argument_pairs: topic '" + topic + "' is short by " +
                            std::to_string(n_opposite_per_topic - n_opp) +
                            " opposite-stance pairs");
    }

    Rng rng(derive_seed(seed, "argument_pairs:" + topic));
    for (std::uint64_t t : sample_distinct(n_same, n_same_per_topic, rng)) {
      const bool in_pro = t < n_pro_pairs;
      const auto& group = in_pro ? pro : con;
      const auto [i, j] = decode_triangular(in_pro ? t : t - n_pro_pairs, group.size());
      out.push_back({args[group[i]], args[group[j]], PairLabel::kSameStance});
    }
    for (std::uint64_t t : sample_distinct(n_opp, n_opposite_per_topic, rng)) {
      const std::size_t i = static_cast<std::size_t>(t / con.size());
      const std::size_t j = static_cast<std::size_t>(t % con.size());
      out.push_back({args[pro[i]], args[con[j]], PairLabel::kOppositeStance});
    }
  }
  return out;
}

}  // namespace cspeech
