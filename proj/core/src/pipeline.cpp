#include "cspeech/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "cspeech/random.hpp"
#include "cspeech/report.hpp"
#include "cspeech/stub_scorer.hpp"
#include "cspeech/text_util.hpp"

namespace cspeech {
namespace fs = std::filesystem;

namespace {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  // Write-then-rename so an interrupted stage never leaves a truncated output.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string dataset_slug(DatasetId id) { return to_lower_ascii(to_string(id)); }

SplitRule parse_rule_alias(std::string_view name) {
  const auto n = to_lower_ascii(name);
  if (n == "small") return SplitRule::kSmall8020;
  if (n == "large") return SplitRule::kLargeTest500;
  return parse_split_rule(name);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

class Logger {
public:
  explicit Logger(std::ostream* out) : out_(out) {}
  template <typename... Args>
  void operator()(const Args&... args) const {
    if (!out_) return;
    ((*out_) << ... << args) << '\n';
  }

private:
  std::ostream* out_;
};

}  // namespace

std::string_view tool_version() {
#ifdef CSPEECH_VERSION
  return CSPEECH_VERSION;
#else
  return "0.0.0";
#endif
}

// ---------------------------------------------------------------------------
// Config

void RunConfig::validate() const {
  if (datasets.empty()) throw InvalidArgument("config: no datasets");
  std::set<DatasetId> seen;
  for (const auto& d : datasets) {
    if (!seen.insert(d.id).second) {
      throw InvalidArgument("config: dataset " + std::string(to_string(d.id)) + " listed twice");
    }
    if (!fs::exists(d.pairs)) throw InvalidArgument("config: missing pairs file " + d.pairs.string());
    if (d.rule != SplitRule::kSmall8020 && d.rule != SplitRule::kLargeTest500) {
      throw InvalidArgument("config: dataset split must be small or large");
    }
    if (!(d.train_frac > 0.0 && d.train_frac < 1.0)) {
      throw InvalidArgument("config: train_frac must lie in (0, 1)");
    }
  }
  if (backends.empty()) throw InvalidArgument("config: no backends");
  std::set<std::string> ids;
  for (const auto& b : backends) {
    b.validate();
    if (!ids.insert(b.backend_id).second) {
      throw InvalidArgument("config: backend id '" + b.backend_id + "' listed twice");
    }
  }
  decoding.validate();
  if (types.empty()) throw InvalidArgument("config: no counterspeech types");
  for (auto s : strategies) {
    if (s == PromptStrategy::kNone) {
      throw InvalidArgument("config: the baseline always runs; list only prompted strategies");
    }
  }
  const bool needs_typed = std::any_of(strategies.begin(), strategies.end(), [](auto s) {
    return s == PromptStrategy::kFrequency || s == PromptStrategy::kCluster;
  });
  if (needs_typed && !typed_corpus) {
    throw InvalidArgument("config: freq and cluster prompts need a typed_corpus");
  }
  if (typed_corpus && !fs::exists(*typed_corpus)) {
    throw InvalidArgument("config: missing typed corpus " + typed_corpus->string());
  }
  if (manual_prompts && !fs::exists(*manual_prompts)) {
    throw InvalidArgument("config: missing manual prompt registry " + manual_prompts->string());
  }
  const bool needs_embed =
      std::find(strategies.begin(), strategies.end(), PromptStrategy::kCluster) != strategies.end();
  if (needs_embed && !scorer.url) {
    throw InvalidArgument("config: cluster prompts need embeddings; configure a scorer or drop "
                          "the cluster strategy");
  }
  if (!(prompt_frac > 0.0 && prompt_frac < 1.0)) {
    throw InvalidArgument("config: prompt_frac must lie in (0, 1)");
  }
  if (parallel_width == 0) throw InvalidArgument("config: parallel_width must be >= 1");
  if (out.empty()) throw InvalidArgument("config: empty output directory");
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  try {
    RunConfig c;
    c.seed = j.value("seed", std::uint64_t{0});
    for (const auto& d : j.at("datasets")) {
      DatasetSpec spec;
      spec.id = parse_dataset_id(d.at("name").get<std::string>());
      spec.pairs = resolve(base_dir, d.at("pairs").get<std::string>());
      if (d.contains("format")) {
        spec.format = to_lower_ascii(d.at("format").get<std::string>()) == "csv" ? InputFormat::kCsv
                                                                                : InputFormat::kJsonl;
      }
      const bool large = spec.id == DatasetId::kReddit || spec.id == DatasetId::kGab;
      spec.rule = d.contains("split") ? parse_rule_alias(d.at("split").get<std::string>())
                                      : (large ? SplitRule::kLargeTest500 : SplitRule::kSmall8020);
      spec.train_frac = d.value("train_frac", spec.train_frac);
      spec.test_count = d.value("test_count", spec.test_count);
      if (d.contains("max_test_hate") && !d.at("max_test_hate").is_null()) {
        spec.max_test_hate = d.at("max_test_hate").get<std::size_t>();
      }
      c.datasets.push_back(std::move(spec));
    }
    if (j.contains("typed_corpus") && !j.at("typed_corpus").is_null()) {
      c.typed_corpus = resolve(base_dir, j.at("typed_corpus").get<std::string>());
    }
    c.prompt_frac = j.value("prompt_frac", c.prompt_frac);
    if (j.contains("manual_prompts") && !j.at("manual_prompts").is_null()) {
      c.manual_prompts = resolve(base_dir, j.at("manual_prompts").get<std::string>());
    }
    for (const auto& b : j.at("backends")) c.backends.push_back(backend_descriptor_from_json(b));
    if (j.contains("decoding")) c.decoding = decoding_config_from_json(j.at("decoding"));
    if (j.contains("strategies")) {
      for (const auto& s : j.at("strategies")) c.strategies.push_back(parse_strategy(s.get<std::string>()));
    }
    if (j.contains("types")) {
      c.types.clear();
      for (const auto& t : j.at("types")) c.types.push_back(parse_cs_type(t.get<std::string>()));
    }
    if (j.contains("scorer") && !j.at("scorer").is_null()) {
      const auto& s = j.at("scorer");
      if (s.contains("url") && !s.at("url").is_null()) c.scorer.url = s.at("url").get<std::string>();
      c.scorer.options.batch_size = s.value("batch_size", c.scorer.options.batch_size);
      c.scorer.options.max_attempts = s.value("max_attempts", c.scorer.options.max_attempts);
      c.scorer.options.max_concurrency = s.value("max_concurrency", c.scorer.options.max_concurrency);
      c.scorer.options.timeout =
          std::chrono::milliseconds(s.value("timeout_ms", c.scorer.options.timeout.count()));
    }
    if (j.contains("mining")) {
      const auto& m = j.at("mining");
      c.mining.prefix_len = m.value("prefix_len", c.mining.prefix_len);
      c.mining.top_n = m.value("top_n", c.mining.top_n);
      auto& cl = c.mining.cluster;
      cl.prefix_len = c.mining.prefix_len;
      cl.top_clusters = m.value("top_clusters", cl.top_clusters);
      cl.reps_per_cluster = m.value("reps_per_cluster", cl.reps_per_cluster);
      cl.elbow.k_min = m.value("k_min", cl.elbow.k_min);
      cl.elbow.k_max = m.value("k_max", cl.elbow.k_max);
      cl.elbow.n_init = m.value("n_init", cl.elbow.n_init);
    }
    c.parallel_width = j.value("parallel_width", c.parallel_width);
    if (j.contains("out")) c.out = resolve(base_dir, j.at("out").get<std::string>());
    return c;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed run config: ") + e.what());
  }
}

RunConfig load_run_config(const fs::path& path) {
  return run_config_from_json(read_json(path), path.parent_path());
}

namespace {

ojson config_json(const RunConfig& c, bool content_hashes) {
  auto path_value = [&](const fs::path& p) -> ojson {
    if (!content_hashes) return p.string();
    return "fnv1a64:" + hex64(fnv1a64(read_file(p)));
  };
  ojson j;
  j["seed"] = c.seed;
  ojson ds = ojson::array();
  for (const auto& d : c.datasets) {
    ojson o;
    o["name"] = to_string(d.id);
    o["pairs"] = path_value(d.pairs);
    o["format"] = d.format.value_or(format_from_path(d.pairs)) == InputFormat::kCsv ? "csv" : "jsonl";
    o["split"] = to_string(d.rule);
    o["train_frac"] = d.train_frac;
    o["test_count"] = d.test_count;
    o["max_test_hate"] = d.max_test_hate ? ojson(*d.max_test_hate) : ojson(nullptr);
    ds.push_back(std::move(o));
  }
  j["datasets"] = std::move(ds);
  j["typed_corpus"] = c.typed_corpus ? path_value(*c.typed_corpus) : ojson(nullptr);
  j["prompt_frac"] = c.prompt_frac;
  j["manual_prompts"] = c.manual_prompts ? path_value(*c.manual_prompts) : ojson(nullptr);
  ojson bs = ojson::array();
  for (const auto& b : c.backends) bs.push_back(to_json(b));
  j["backends"] = std::move(bs);
  j["decoding"] = to_json(c.decoding);
  ojson ss = ojson::array();
  for (auto s : c.strategies) ss.push_back(to_string(s));
  j["strategies"] = std::move(ss);
  ojson ts = ojson::array();
  for (auto t : c.types) ts.push_back(to_string(t));
  j["types"] = std::move(ts);
  ojson sc;
  sc["url"] = c.scorer.url ? ojson(*c.scorer.url) : ojson(nullptr);
  sc["batch_size"] = c.scorer.options.batch_size;
  sc["max_attempts"] = c.scorer.options.max_attempts;
  sc["max_concurrency"] = c.scorer.options.max_concurrency;
  sc["timeout_ms"] = c.scorer.options.timeout.count();
  j["scorer"] = std::move(sc);
  ojson m;
  m["prefix_len"] = c.mining.prefix_len;
  m["top_n"] = c.mining.top_n;
  m["top_clusters"] = c.mining.cluster.top_clusters;
  m["reps_per_cluster"] = c.mining.cluster.reps_per_cluster;
  m["k_min"] = c.mining.cluster.elbow.k_min;
  m["k_max"] = c.mining.cluster.elbow.k_max;
  m["n_init"] = c.mining.cluster.elbow.n_init;
  j["mining"] = std::move(m);
  j["parallel_width"] = c.parallel_width;
  if (!content_hashes) j["out"] = c.out.string();
  return j;
}

}  // namespace

nlohmann::ordered_json to_json(const RunConfig& config) { return config_json(config, false); }

std::string config_hash(const RunConfig& config) {
  return hex64(fnv1a64(config_json(config, true).dump()));
}

// ---------------------------------------------------------------------------
// Helpers

std::unique_ptr<ScorerClient> make_scorer_client(const ScorerSpec& spec) {
  if (!spec.url) return nullptr;
  if (*spec.url == "stub") {
    return std::make_unique<ScorerClient>(std::make_shared<StubScorerTransport>(), spec.options);
  }
  return std::make_unique<ScorerClient>(
      std::make_shared<HttpScorerTransport>(*spec.url, spec.options.timeout), spec.options);
}

std::map<std::string, std::vector<std::string>> build_references(std::span<const CsPair> pairs) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& p : pairs) out[hate_key(p.hate_speech)].push_back(p.counterspeech);
  return out;
}

std::vector<GenerationRequest> plan_requests(
    DatasetId dataset, const std::string& backend_id, std::span<const std::string> hate_speech,
    const std::map<PromptStrategy, PromptRegistry>& prompts,
    std::span<const PromptStrategy> strategies, std::span<const CsType> types,
    const DecodingConfig& decoding, std::uint64_t seed) {
  std::vector<GenerationRequest> out;
  const std::string prefix = dataset_slug(dataset) + ":" + backend_id + ":";
  for (std::size_t h = 0; h < hate_speech.size(); ++h) {
    char index[24];
    std::snprintf(index, sizeof index, "%05zu", h);
    auto make = [&](PromptStrategy s, std::optional<CsType> t) {
      GenerationRequest r;
      r.request_id = prefix + std::string(to_string(s)) + ":" +
                     (t ? std::string(to_string(*t)) : std::string("base")) + ":" + index;
      r.dataset = dataset;
      r.hate_speech = hate_speech[h];
      r.strategy = s;
      r.cs_type = t;
      r.config = decoding;
      r.config.seed = derive_seed(seed, "decode/" + r.request_id);
      if (t) {
        const auto reg = prompts.find(s);
        if (reg == prompts.end()) {
          throw InvalidArgument("plan_requests: no prompts mined for " + std::string(to_string(s)));
        }
        const auto set = reg->second.find(*t);
        if (set == reg->second.end() || set->second.prompts.empty()) {
          throw InvalidArgument("plan_requests: no " + std::string(to_string(s)) + " prompts for " +
                                std::string(to_string(*t)));
        }
        Rng rng(derive_seed(seed, "prompt/" + r.request_id));
        r.type_prompt = select_prompt(set->second, rng);
      }
      out.push_back(std::move(r));
    };
    make(PromptStrategy::kNone, std::nullopt);
    for (auto s : strategies) {
      for (auto t : types) make(s, t);
    }
  }
  return out;
}

void write_prompt_sets(const fs::path& path, const PromptRegistry& sets) {
  ojson arr = ojson::array();
  for (const auto& [type, set] : sets) arr.push_back(to_json(set));
  write_file(path, arr.dump(2) + "\n");
}

PromptRegistry read_prompt_sets(const fs::path& path) {
  PromptRegistry out;
  for (const auto& j : read_json(path)) {
    auto set = prompt_set_from_json(j);
    out.emplace(set.cs_type, std::move(set));
  }
  return out;
}

void write_rows_jsonl(const fs::path& path, std::span<const MetricRow> rows) {
  std::string content;
  for (const auto& r : rows) content += to_json(r).dump() + "\n";
  write_file(path, content);
}

std::vector<MetricRow> read_rows_jsonl(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<MetricRow> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(metric_row_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw DataError(path.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

std::vector<CsPair> read_canonical_pairs(const fs::path& path, DatasetId id) {
  return load_pairs(path, InputFormat::kJsonl, id, LoadMode::kStrict).items;
}

std::vector<GenerationRecord> read_records(const fs::path& path) {
  std::istringstream in(read_file(path));
  return read_records_jsonl(in);
}

class Run {
public:
  Run(const RunConfig& config, const PipelineOptions& options)
      : c_(config), opts_(options), log_(options.log), hash_(config_hash(config)) {}

  PipelineResult execute() {
    PipelineResult result;
    load_manifest();
    std::string stage;
    try {
      for (auto s : kStages) {
        stage = s;
        if (opts_.resume && done(stage)) {
          log_("[", stage, "] already complete, skipping");
          continue;
        }
        log_("[", stage, "] running");
        std::vector<std::string> outputs = run_stage(stage);
        mark_done(stage, std::move(outputs));
      }
    } catch (const std::exception& e) {
      result.exit_code = 2;
      result.failed_stage = stage;
      result.message = e.what();
      manifest_["failed_stage"] = stage;
      manifest_["error"] = e.what();
      save_manifest();
      return result;
    }
    manifest_.erase("failed_stage");
    manifest_.erase("error");
    save_manifest();
    result.n_records = n_records_;
    result.n_failed = n_failed_;
    result.exit_code = n_failed_ > 0 ? 1 : 0;
    return result;
  }

private:
  fs::path path(const std::string& rel) const { return c_.out / rel; }

  void load_manifest() {
    const fs::path mpath = path("manifest.json");
    if (opts_.resume && fs::exists(mpath)) {
      json old = read_json(mpath);
      if (old.value("config_hash", std::string{}) != hash_) {
        throw InvalidArgument("cannot resume: the run directory was produced by config " +
                              old.value("config_hash", std::string{"?"}) + ", current config is " +
                              hash_);
      }
      manifest_ = ojson::parse(old.dump());
      return;
    }
    manifest_ = ojson::object();
    manifest_["tool_version"] = tool_version();
    manifest_["config_hash"] = hash_;
    manifest_["seed"] = c_.seed;
    manifest_["config"] = to_json(c_);
    manifest_["stages"] = ojson::object();
    save_manifest();
  }

  void save_manifest() { write_file(path("manifest.json"), manifest_.dump(2) + "\n"); }

  bool done(const std::string& stage) const {
    const auto& stages = manifest_.at("stages");
    if (!stages.contains(stage) || stages.at(stage).at("status") != "done") return false;
    for (const auto& o : stages.at(stage).at("outputs")) {
      if (!fs::exists(path(o.get<std::string>()))) return false;
    }
    return true;
  }

  void mark_done(const std::string& stage, std::vector<std::string> outputs) {
    ojson s;
    s["status"] = "done";
    ojson hashes = ojson::object();
    for (const auto& o : outputs) hashes[o] = hex64(fnv1a64(read_file(path(o))));
    s["outputs"] = outputs;
    s["output_hashes"] = std::move(hashes);
    manifest_["stages"][stage] = std::move(s);
    save_manifest();
  }

  std::vector<std::string> run_stage(const std::string& stage) {
    if (stage == "ingest") return ingest();
    if (stage == "split") return split();
    if (stage == "mine") return mine();
    if (stage == "generate") return generate_all();
    if (stage == "score") return score();
    return report();
  }

  ScorerClient* scorer() {
    if (!scorer_ && c_.scorer.url) scorer_ = make_scorer_client(c_.scorer);
    return scorer_.get();
  }

  std::vector<std::string> ingest() {
    std::vector<std::string> outputs;
    for (const auto& d : c_.datasets) {
      auto loaded = load_pairs(d.pairs, d.format.value_or(format_from_path(d.pairs)), d.id,
                               LoadMode::kPermissive);
      if (!loaded.errors.empty()) {
        std::string msg = d.pairs.string() + ": " + std::to_string(loaded.errors.size()) +
                          " malformed record(s)";
        for (std::size_t i = 0; i < std::min<std::size_t>(5, loaded.errors.size()); ++i) {
          msg += "\n  line " + std::to_string(loaded.errors[i].line) + ": " + loaded.errors[i].message;
        }
        throw DataError(msg);
      }
      const std::string slug = dataset_slug(d.id);
      std::ostringstream out;
      write_pairs_jsonl(out, loaded.items);
      write_file(path("pairs/" + slug + ".jsonl"), out.str());
      const auto stats = dataset_stats(loaded.items);
      ojson s;
      s["dataset"] = to_string(d.id);
      s["pairs"] = stats.n_pairs;
      s["unique_hate"] = stats.n_unique_hate;
      s["avg_cs_len"] = stats.avg_cs_len;
      write_file(path("pairs/" + slug + ".stats.json"), s.dump(2) + "\n");
      log_("  ", to_string(d.id), ": ", stats.n_pairs, " pairs, ", stats.n_unique_hate,
           " unique hate speeches");
      outputs.push_back("pairs/" + slug + ".jsonl");
      outputs.push_back("pairs/" + slug + ".stats.json");
    }
    return outputs;
  }

  std::vector<std::string> split() {
    std::vector<std::string> outputs;
    for (const auto& d : c_.datasets) {
      const std::string slug = dataset_slug(d.id);
      const auto pairs = read_canonical_pairs(path("pairs/" + slug + ".jsonl"), d.id);
      const std::uint64_t seed = derive_seed(c_.seed, "split/" + slug);
      const SplitManifest m = d.rule == SplitRule::kLargeTest500
                                  ? split_large(pairs, d.test_count, seed)
                                  : split_small(pairs, d.train_frac, seed);
      write_file(path("splits/" + slug + ".json"), to_json(m).dump(2) + "\n");
      outputs.push_back("splits/" + slug + ".json");
    }
    if (c_.typed_corpus) {
      const auto items = load_typed(*c_.typed_corpus, format_from_path(*c_.typed_corpus),
                                    LoadMode::kStrict).items;
      const auto split = split_type_corpus(items, c_.prompt_frac, derive_seed(c_.seed, "split/types"));
      ojson j;
      j["prompting"] = to_json(split.prompt_manifest);
      j["classification"] = to_json(split.classification);
      write_file(path("splits/types.json"), j.dump(2) + "\n");
      outputs.push_back("splits/types.json");
    }
    return outputs;
  }

  std::map<CsType, std::vector<std::string>> prompting_texts() {
    const auto items = load_typed(*c_.typed_corpus, format_from_path(*c_.typed_corpus),
                                  LoadMode::kStrict).items;
    const auto manifest = split_manifest_from_json(read_json(path("splits/types.json")).at("prompting"));
    const std::set<std::string> ids(manifest.train.begin(), manifest.train.end());
    std::map<CsType, std::vector<std::string>> out;
    for (const auto& it : items) {
      if (ids.contains(it.source_id)) out[it.cs_type].push_back(it.text);
    }
    return out;
  }

  std::vector<std::string> mine() {
    std::vector<std::string> outputs;
    std::map<CsType, std::vector<std::string>> texts;
    if (c_.typed_corpus) texts = prompting_texts();
    for (auto s : c_.strategies) {
      PromptRegistry sets;
      if (s == PromptStrategy::kManual) {
        const PromptRegistry all = c_.manual_prompts ? load_manual_prompts_file(*c_.manual_prompts)
                                                     : load_manual_prompts(default_manual_registry());
        for (auto t : c_.types) {
          const auto it = all.find(t);
          if (it == all.end()) {
            throw InvalidArgument("manual prompt registry has no entry for " + std::string(to_string(t)));
          }
          sets.emplace(t, it->second);
        }
      } else {
        for (auto t : c_.types) {
          const auto& items = texts[t];
          if (items.empty()) {
            throw DataError("typed corpus has no prompting items for " + std::string(to_string(t)));
          }
          if (s == PromptStrategy::kFrequency) {
            sets.emplace(t, mine_frequency_prompts(t, items, c_.mining.prefix_len, c_.mining.top_n));
          } else {
            ScorerEmbedder embedder(*scorer());
            ClusterMiningOptions opts = c_.mining.cluster;
            opts.prefix_len = c_.mining.prefix_len;
            opts.embed_batch_size = c_.scorer.options.batch_size;
            const auto seed = derive_seed(c_.seed, "mine/" + std::string(to_string(t)));
            sets.emplace(t, mine_cluster_prompts(t, items, embedder, opts, seed));
          }
        }
      }
      const std::string rel = "prompts/" + std::string(to_string(s)) + ".json";
      write_prompt_sets(path(rel), sets);
      outputs.push_back(rel);
    }
    return outputs;
  }

  std::vector<std::string> generate_all() {
    std::map<PromptStrategy, PromptRegistry> prompts;
    for (auto s : c_.strategies) {
      prompts[s] = read_prompt_sets(path("prompts/" + std::string(to_string(s)) + ".json"));
    }
    std::vector<std::string> outputs;
    for (const auto& b : c_.backends) {
      auto backend = make_backend(b);
      std::vector<GenerationRequest> requests;
      for (const auto& d : c_.datasets) {
        const auto hate = test_hate_speech(d);
        auto planned = plan_requests(d.id, b.backend_id, hate, prompts, c_.strategies, c_.types,
                                     c_.decoding, c_.seed);
        requests.insert(requests.end(), std::make_move_iterator(planned.begin()),
                        std::make_move_iterator(planned.end()));
      }
      log_("  ", b.backend_id, ": ", requests.size(), " requests");
      const auto batch = batch_generate(*backend, requests, c_.parallel_width);
      if (batch.failures) log_("  ", b.backend_id, ": ", batch.failures, " request(s) failed");
      std::ostringstream out;
      write_records_jsonl(out, batch.records);
      const std::string rel = "generations/" + b.backend_id + ".jsonl";
      write_file(path(rel), out.str());
      outputs.push_back(rel);
    }
    return outputs;
  }

  std::vector<std::string> test_hate_speech(const DatasetSpec& d) {
    const std::string slug = dataset_slug(d.id);
    const auto pairs = read_canonical_pairs(path("pairs/" + slug + ".jsonl"), d.id);
    const auto manifest = split_manifest_from_json(read_json(path("splits/" + slug + ".json")));
    std::vector<std::string> keys = manifest.test;
    if (d.max_test_hate && keys.size() > *d.max_test_hate) {
      Rng rng(derive_seed(c_.seed, "sample/" + slug));
      rng.shuffle(std::span(keys));
      keys.resize(*d.max_test_hate);
      std::sort(keys.begin(), keys.end());
    }
    // First verbatim occurrence of each selected key.
    std::map<std::string, std::string> text;
    for (const auto& p : pairs) text.emplace(hate_key(p.hate_speech), p.hate_speech);
    std::vector<std::string> out;
    for (const auto& k : keys) out.push_back(text.at(k));
    return out;
  }

  std::vector<std::string> score() {
    std::vector<GenerationRecord> records;
    for (const auto& b : c_.backends) {
      auto r = read_records(path("generations/" + b.backend_id + ".jsonl"));
      records.insert(records.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
    }
    std::map<std::string, std::vector<std::string>> references;
    std::map<DatasetId, std::vector<TokenSequence>> novelty_corpora;
    for (const auto& d : c_.datasets) {
      const std::string slug = dataset_slug(d.id);
      const auto pairs = read_canonical_pairs(path("pairs/" + slug + ".jsonl"), d.id);
      const auto manifest = split_manifest_from_json(read_json(path("splits/" + slug + ".json")));
      const auto test = select_pairs(pairs, manifest, Partition::kTest);
      for (auto& [k, refs] : build_references(test)) {
        auto& dst = references[k];
        dst.insert(dst.end(), refs.begin(), refs.end());
      }
      for (const auto& p : select_pairs(pairs, manifest, Partition::kTrain)) {
        novelty_corpora[d.id].push_back(tokenize(p.counterspeech));
      }
    }

    ScorerClient* client = scorer();
    std::optional<Capabilities> caps;
    if (client) caps = client->capabilities();
    Evaluation ev = evaluate_vanilla(records, references, novelty_corpora, client, caps);
    write_rows_jsonl(path("scores/rows.jsonl"), ev.rows);

    ojson meta;
    meta["records"] = records.size();
    meta["failed"] = std::count_if(records.begin(), records.end(), [](const auto& r) { return !r.ok(); });
    ojson excl = ojson::array();
    for (const auto& e : ev.excluded) excl.push_back({{"record_id", e.record_id}, {"reason", e.reason}});
    meta["excluded"] = std::move(excl);
    meta["notes"] = ev.notes;
    ojson versions = ojson::object();
    std::vector<std::string> warnings;
    if (client) {
      for (const auto& [k, v] : caps->versions) versions[k] = v;
      for (const auto& [k, v] : client->observed_versions()) versions[k] = v;
      warnings = client->warnings();
    }
    meta["model_versions"] = std::move(versions);
    meta["warnings"] = warnings;
    meta["scorer"] = client ? client->describe() : std::string("disabled");
    write_file(path("scores/evaluation.json"), meta.dump(2) + "\n");
    return {"scores/rows.jsonl", "scores/evaluation.json"};
  }

  std::vector<std::string> report() {
    const auto rows = read_rows_jsonl(path("scores/rows.jsonl"));
    const json meta = read_json(path("scores/evaluation.json"));
    Provenance p;
    p.tool_version = tool_version();
    p.seed = c_.seed;
    p.config_hash = hash_;
    for (const auto& b : c_.backends) p.backends.push_back(b.backend_id);
    p.strategies.emplace_back(table_label(PromptStrategy::kNone));
    for (auto s : c_.strategies) p.strategies.emplace_back(table_label(s));
    p.scorer = meta.at("scorer").get<std::string>();
    p.model_versions = meta.at("model_versions").get<std::map<std::string, std::string>>();
    p.warnings = meta.at("warnings").get<std::vector<std::string>>();
    std::vector<Exclusion> excluded;
    for (const auto& e : meta.at("excluded")) excluded.push_back({e.at("record_id"), e.at("reason")});
    n_records_ = meta.at("records").get<std::size_t>();
    n_failed_ = meta.at("failed").get<std::size_t>();
    const auto r = build_report(rows, std::move(p), n_records_, n_failed_, std::move(excluded),
                                meta.at("notes").get<std::vector<std::string>>());
    write_report(path("report"), r);
    return {"report/report.json", "report/report.txt"};
  }

  const RunConfig& c_;
  const PipelineOptions& opts_;
  Logger log_;
  std::string hash_;
  ojson manifest_;
  std::unique_ptr<ScorerClient> scorer_;
  std::size_t n_records_ = 0;
  std::size_t n_failed_ = 0;
};

}  // namespace

PipelineResult run_pipeline(const RunConfig& config, const PipelineOptions& options) {
  try {
    config.validate();
    fs::create_directories(config.out);
    Run run(config, options);
    return run.execute();
  } catch (const std::exception& e) {
    PipelineResult r;
    r.exit_code = 2;
    r.failed_stage = "config";
    r.message = e.what();
    return r;
  }
}

}  // namespace cspeech
