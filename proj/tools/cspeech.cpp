// cspeech: command-line front end for the counterspeech generation and
// evaluation harness.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cspeech/corpus.hpp"
#include "cspeech/evaluation.hpp"
#include "cspeech/generation.hpp"
#include "cspeech/pipeline.hpp"
#include "cspeech/prompt_engine.hpp"
#include "cspeech/random.hpp"
#include "cspeech/report.hpp"
#include "cspeech/scorer_client.hpp"
#include "cspeech/text_util.hpp"

namespace fs = std::filesystem;
using namespace cspeech;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitFatal = 2;

struct Common {
  std::uint64_t seed = 0;
  std::vector<std::string> strategies;
  std::vector<std::string> types;
  std::string backend;
  std::string scorer_url;
  bool no_scorer = false;
  std::string out;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
}

std::vector<PromptStrategy> parse_strategies(const std::vector<std::string>& names) {
  std::vector<PromptStrategy> out;
  for (const auto& n : names) {
    const auto s = parse_strategy(n);
    if (s != PromptStrategy::kNone && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  return out;
}

std::vector<CsType> parse_types(const std::vector<std::string>& names) {
  if (names.empty()) return {kAllCsTypes.begin(), kAllCsTypes.end()};
  std::vector<CsType> out;
  for (const auto& n : names) {
    const auto t = parse_cs_type(n);
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  }
  return out;
}

BackendDescriptor parse_backend(const std::string& spec) {
  if (spec.empty() || spec == "mock") {
    BackendDescriptor d;
    d.backend_id = "mock";
    d.kind = BackendKind::kMock;
    return d;
  }
  return backend_descriptor_from_json(nlohmann::json::parse(read_text(spec)));
}

std::optional<std::string> scorer_url(const Common& c) {
  if (c.no_scorer) return std::nullopt;
  if (c.scorer_url.empty()) return std::nullopt;
  return c.scorer_url;
}

std::vector<CsPair> load_strict(const fs::path& path, DatasetId id) {
  return load_pairs(path, format_from_path(path), id, LoadMode::kStrict).items;
}

SplitManifest read_manifest(const fs::path& path) {
  return split_manifest_from_json(nlohmann::json::parse(read_text(path)));
}

// -- ingest -----------------------------------------------------------------

int cmd_ingest(const fs::path& input, const std::string& dataset, const std::string& format,
               bool permissive, const Common& c) {
  const DatasetId id = parse_dataset_id(dataset);
  const InputFormat fmt = format.empty() ? format_from_path(input)
                          : to_lower_ascii(format) == "csv" ? InputFormat::kCsv
                                                            : InputFormat::kJsonl;
  auto loaded = load_pairs(input, fmt, id, LoadMode::kPermissive);
  for (const auto& e : loaded.errors) {
    std::cerr << input.string() << ":" << e.line << ": " << e.message << '\n';
  }
  if (!loaded.errors.empty() && !permissive) {
    std::cerr << "ingest: " << loaded.errors.size() << " malformed record(s); nothing written\n";
    return kExitFatal;
  }
  if (loaded.items.empty()) {
    std::cerr << "ingest: no pairs loaded\n";
    return kExitFatal;
  }
  const fs::path out_dir = c.out.empty() ? fs::path(".") : fs::path(c.out);
  const std::string slug = to_lower_ascii(to_string(id));
  std::ostringstream pairs;
  write_pairs_jsonl(pairs, loaded.items);
  write_text(out_dir / (slug + ".jsonl"), pairs.str());

  const auto stats = dataset_stats(loaded.items);
  nlohmann::ordered_json s;
  s["dataset"] = to_string(id);
  s["pairs"] = stats.n_pairs;
  s["unique_hate"] = stats.n_unique_hate;
  s["avg_cs_len"] = stats.avg_cs_len;
  write_text(out_dir / (slug + ".stats.json"), s.dump(2) + "\n");
  std::cout << to_string(id) << ": " << stats.n_pairs << " pairs, " << stats.n_unique_hate
            << " unique hate speeches, avg counterspeech length " << stats.avg_cs_len << '\n';
  return loaded.errors.empty() ? kExitOk : kExitPartial;
}

// -- split ------------------------------------------------------------------

int cmd_split(const std::string& pairs_path, const std::string& typed_path, const std::string& rule,
              double train_frac, std::size_t test_count, double prompt_frac, const Common& c) {
  if (c.out.empty()) throw InvalidArgument("split: --out is required");
  if (!typed_path.empty()) {
    const auto items = load_typed(typed_path, format_from_path(typed_path), LoadMode::kStrict).items;
    const auto split = split_type_corpus(items, prompt_frac, c.seed);
    nlohmann::ordered_json j;
    j["prompting"] = to_json(split.prompt_manifest);
    j["classification"] = to_json(split.classification);
    write_text(c.out, j.dump(2) + "\n");
    std::cout << "prompting " << split.prompting.size() << ", classification train "
              << split.classification.train.size() << " / validation "
              << split.classification.validation.size() << " / test "
              << split.classification.test.size() << '\n';
    return kExitOk;
  }
  if (pairs_path.empty()) throw InvalidArgument("split: give --pairs or --typed");
  const auto pairs = load_strict(pairs_path, DatasetId::kOther);
  const auto lower = to_lower_ascii(rule);
  const SplitManifest m = lower == "large" || lower == "large_test_500"
                              ? split_large(pairs, test_count, c.seed)
                              : split_small(pairs, train_frac, c.seed);
  write_text(c.out, to_json(m).dump(2) + "\n");
  std::cout << to_string(m.rule) << ": train " << m.train.size() << ", validation "
            << m.validation.size() << ", test " << m.test.size() << " hate speeches\n";
  return kExitOk;
}

// -- mine-prompts -----------------------------------------------------------

int cmd_mine(const std::string& typed_path, const std::string& manual_path, double prompt_frac,
             std::size_t prefix_len, std::size_t top_n, const Common& c) {
  if (c.out.empty()) throw InvalidArgument("mine-prompts: --out is required");
  auto strategies = parse_strategies(c.strategies);
  if (strategies.empty()) strategies = {PromptStrategy::kManual, PromptStrategy::kFrequency, PromptStrategy::kCluster};
  const auto types = parse_types(c.types);

  std::map<CsType, std::vector<std::string>> texts;
  if (!typed_path.empty()) {
    const auto items = load_typed(typed_path, format_from_path(typed_path), LoadMode::kStrict).items;
    const auto split = split_type_corpus(items, prompt_frac, c.seed);
    for (const auto& it : split.prompting) texts[it.cs_type].push_back(it.text);
  }
  std::unique_ptr<ScorerClient> scorer;
  if (auto url = scorer_url(c)) {
    ScorerSpec spec;
    spec.url = url;
    scorer = make_scorer_client(spec);
  }

  for (auto s : strategies) {
    PromptRegistry sets;
    if (s == PromptStrategy::kManual) {
      const auto all = manual_path.empty() ? load_manual_prompts(default_manual_registry())
                                           : load_manual_prompts_file(manual_path);
      for (auto t : types) {
        const auto it = all.find(t);
        if (it == all.end()) throw InvalidArgument("no manual prompt for " + std::string(to_string(t)));
        sets.emplace(t, it->second);
      }
    } else {
      if (typed_path.empty()) throw InvalidArgument("mine-prompts: freq and cluster need --typed");
      if (s == PromptStrategy::kCluster && !scorer) {
        throw InvalidArgument("mine-prompts: cluster prompts need --scorer-url (\"stub\" for the built-in stub)");
      }
      for (auto t : types) {
        const auto& items = texts[t];
        if (items.empty()) throw DataError("no prompting items for " + std::string(to_string(t)));
        if (s == PromptStrategy::kFrequency) {
          sets.emplace(t, mine_frequency_prompts(t, items, prefix_len, top_n));
        } else {
          ScorerEmbedder embedder(*scorer);
          ClusterMiningOptions opts;
          opts.prefix_len = prefix_len;
          sets.emplace(t, mine_cluster_prompts(t, items, embedder, opts,
                                               derive_seed(c.seed, "mine/" + std::string(to_string(t)))));
        }
      }
    }
    const fs::path path = fs::path(c.out) / (std::string(to_string(s)) + ".json");
    write_prompt_sets(path, sets);
    std::cout << to_string(s) << ": ";
    for (const auto& [t, set] : sets) std::cout << to_string(t) << "=" << set.prompts.size() << " ";
    std::cout << "-> " << path.string() << '\n';
  }
  return kExitOk;
}

// -- generate ---------------------------------------------------------------

int cmd_generate(const std::string& pairs_path, const std::string& dataset,
                 const std::string& split_path, const std::string& prompts_dir,
                 std::size_t width, const Common& c) {
  if (c.out.empty()) throw InvalidArgument("generate: --out is required");
  const DatasetId id = parse_dataset_id(dataset);
  const auto pairs = load_strict(pairs_path, id);
  std::set<std::string> wanted;
  if (!split_path.empty()) {
    const auto m = read_manifest(split_path);
    wanted.insert(m.test.begin(), m.test.end());
  }
  std::map<std::string, std::string> hate;
  for (const auto& p : pairs) {
    const auto k = hate_key(p.hate_speech);
    if (wanted.empty() || wanted.contains(k)) hate.emplace(k, p.hate_speech);
  }
  std::vector<std::string> texts;
  for (const auto& [k, v] : hate) texts.push_back(v);

  const auto strategies = parse_strategies(c.strategies);
  std::map<PromptStrategy, PromptRegistry> prompts;
  for (auto s : strategies) {
    prompts[s] = read_prompt_sets(fs::path(prompts_dir) / (std::string(to_string(s)) + ".json"));
  }
  const auto descriptor = parse_backend(c.backend);
  auto backend = make_backend(descriptor);
  const auto requests = plan_requests(id, descriptor.backend_id, texts, prompts, strategies,
                                      parse_types(c.types), DecodingConfig{}, c.seed);
  const auto result = batch_generate(*backend, requests, width);
  std::ostringstream out;
  write_records_jsonl(out, result.records);
  write_text(c.out, out.str());
  std::cout << result.records.size() << " records, " << result.failures << " failed -> " << c.out << '\n';
  return result.failures ? kExitPartial : kExitOk;
}

// -- score ------------------------------------------------------------------

int cmd_score(const std::string& records_path, const std::string& pairs_path,
              const std::string& dataset, const std::string& split_path, const Common& c) {
  if (c.out.empty()) throw InvalidArgument("score: --out is required");
  std::istringstream in(read_text(records_path));
  const auto records = read_records_jsonl(in);
  const DatasetId id = parse_dataset_id(dataset);
  const auto pairs = load_strict(pairs_path, id);
  const auto manifest = read_manifest(split_path);
  const auto refs = build_references(select_pairs(pairs, manifest, Partition::kTest));
  std::map<DatasetId, std::vector<TokenSequence>> novelty;
  for (const auto& p : select_pairs(pairs, manifest, Partition::kTrain)) {
    novelty[id].push_back(tokenize(p.counterspeech));
  }
  std::unique_ptr<ScorerClient> scorer;
  std::optional<Capabilities> caps;
  if (auto url = scorer_url(c)) {
    ScorerSpec spec;
    spec.url = url;
    scorer = make_scorer_client(spec);
    caps = scorer->capabilities();
  }
  const auto ev = evaluate_vanilla(records, refs, novelty, scorer.get(), caps);
  write_rows_jsonl(c.out, ev.rows);

  nlohmann::ordered_json meta;
  meta["records"] = records.size();
  meta["failed"] = std::count_if(records.begin(), records.end(), [](const auto& r) { return !r.ok(); });
  nlohmann::ordered_json excl = nlohmann::ordered_json::array();
  for (const auto& e : ev.excluded) {
    excl.push_back({{"record_id", e.record_id}, {"reason", e.reason}});
    std::cerr << "excluded " << e.record_id << ": " << e.reason << '\n';
  }
  meta["excluded"] = std::move(excl);
  meta["notes"] = ev.notes;
  nlohmann::ordered_json versions = nlohmann::ordered_json::object();
  std::vector<std::string> warnings;
  if (scorer) {
    for (const auto& [k, v] : caps->versions) versions[k] = v;
    for (const auto& [k, v] : scorer->observed_versions()) versions[k] = v;
    warnings = scorer->warnings();
  }
  meta["model_versions"] = std::move(versions);
  meta["warnings"] = warnings;
  meta["scorer"] = scorer ? scorer->describe() : std::string("disabled");
  const fs::path meta_path = fs::path(c.out).replace_extension(".meta.json");
  write_text(meta_path, meta.dump(2) + "\n");
  std::cout << ev.rows.size() << " rows, " << ev.excluded.size() << " excluded -> " << c.out << '\n';
  return ev.excluded.empty() ? kExitOk : kExitPartial;
}

// -- report -----------------------------------------------------------------

int cmd_report(const std::string& rows_path, const std::string& meta_path, const Common& c) {
  if (c.out.empty()) throw InvalidArgument("report: --out is required");
  const auto rows = read_rows_jsonl(rows_path);
  Provenance p;
  p.tool_version = tool_version();
  p.seed = c.seed;
  p.scorer = "disabled";
  std::size_t n_records = rows.size(), n_failed = 0;
  std::vector<Exclusion> excluded;
  std::vector<std::string> notes;
  if (!meta_path.empty()) {
    const auto meta = nlohmann::json::parse(read_text(meta_path));
    p.scorer = meta.at("scorer").get<std::string>();
    p.model_versions = meta.at("model_versions").get<std::map<std::string, std::string>>();
    p.warnings = meta.at("warnings").get<std::vector<std::string>>();
    n_records = meta.at("records").get<std::size_t>();
    n_failed = meta.at("failed").get<std::size_t>();
    for (const auto& e : meta.at("excluded")) excluded.push_back({e.at("record_id"), e.at("reason")});
    notes = meta.at("notes").get<std::vector<std::string>>();
  }
  std::set<std::string> backends;
  std::set<PromptStrategy> strategies;
  for (const auto& r : rows) {
    backends.insert(r.backend_id);
    strategies.insert(r.strategy);
  }
  p.backends.assign(backends.begin(), backends.end());
  for (auto s : strategies) p.strategies.emplace_back(table_label(s));
  const auto report = build_report(rows, std::move(p), n_records, n_failed, std::move(excluded),
                                   std::move(notes));
  write_report(c.out, report);
  std::cout << render_text(report);
  return kExitOk;
}

// -- correlate --------------------------------------------------------------

int cmd_correlate(const std::string& rows_path, const std::string& metric, std::size_t n_per_tail,
                  const std::string& sample_out, const std::string& ratings_path, const Common& c) {
  const auto rows = read_rows_jsonl(rows_path);
  const auto sample = tail_sample(rows, metric, n_per_tail, c.seed);
  if (!sample_out.empty()) {
    // Annotators see only record ids; tails are recomputed from rows and seed.
    std::string csv = "record_id,rating\n";
    for (const auto& s : sample) csv += s.record_id + ",\n";
    write_text(sample_out, csv);
    std::cout << sample.size() << " records to rate -> " << sample_out << '\n';
  }
  if (ratings_path.empty()) return kExitOk;
  const auto ratings = parse_ratings_csv(read_text(ratings_path));
  const auto corr = correlate(sample, ratings, metric);
  nlohmann::ordered_json j;
  j["metric"] = corr.metric;
  j["n"] = corr.n;
  j["point_biserial"] = corr.point_biserial;
  j["spearman"] = corr.spearman;
  j["unrated"] = corr.unrated;
  if (!c.out.empty()) write_text(c.out, j.dump(2) + "\n");
  std::cout << metric << ": n=" << corr.n << " point-biserial=" << corr.point_biserial
            << " spearman=" << corr.spearman << '\n';
  return corr.unrated.empty() ? kExitOk : kExitPartial;
}

// -- pipeline ---------------------------------------------------------------

int cmd_pipeline(const std::string& config_path, bool resume, CLI::App& sub, const Common& c) {
  RunConfig config = load_run_config(config_path);
  if (sub.count("--seed")) config.seed = c.seed;
  if (sub.count("--strategies")) config.strategies = parse_strategies(c.strategies);
  if (sub.count("--types")) config.types = parse_types(c.types);
  if (sub.count("--backend")) config.backends = {parse_backend(c.backend)};
  if (sub.count("--scorer-url")) config.scorer.url = c.scorer_url;
  if (c.no_scorer) config.scorer.url.reset();
  if (sub.count("--out")) config.out = c.out;

  PipelineOptions options;
  options.resume = resume;
  options.log = &std::cerr;
  const auto result = run_pipeline(config, options);
  if (result.exit_code == kExitFatal) {
    std::cerr << "pipeline failed in stage '" << result.failed_stage << "': " << result.message << '\n';
    if (result.failed_stage != "config") {
      std::cerr << "resume token: " << result.failed_stage << " (re-run with --resume)\n";
    }
    return kExitFatal;
  }
  std::cout << "run complete: " << result.n_records << " records, " << result.n_failed
            << " failed -> " << (config.out / "report").string() << '\n';
  return result.exit_code;
}

void add_common(CLI::App* sub, Common& c, bool selection, bool scorer) {
  sub->add_option("--seed", c.seed, "Primary seed");
  sub->add_option("--out", c.out, "Output path");
  if (selection) {
    sub->add_option("--strategies", c.strategies, "Prompt strategies (manual,freq,cluster)")->delimiter(',');
    sub->add_option("--types", c.types, "Counterspeech types (default: all six)")->delimiter(',');
  }
  if (scorer) {
    sub->add_option("--scorer-url", c.scorer_url, "Scorer base URL, or \"stub\" for the built-in stub");
    sub->add_flag("--no-scorer", c.no_scorer, "Skip model-based scoring");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterspeech generation and evaluation harness"};
  app.set_version_flag("--version", std::string(tool_version()));
  app.require_subcommand(1);

  Common c;
  std::string input, dataset = "other", format, pairs, typed, rule = "small", split, prompts_dir,
                     records, rows, meta, metric, sample_out, ratings, config, manual;
  bool permissive = false, resume = false;
  double train_frac = 0.8, prompt_frac = 0.3;
  std::size_t test_count = 500, prefix_len = 4, top_n = 10, width = 4, n_per_tail = 25;

  auto* ingest = app.add_subcommand("ingest", "Load a raw pair file and write canonical JSONL plus stats");
  ingest->add_option("--input", input, "Raw pair file (.jsonl or .csv)")->required();
  ingest->add_option("--dataset", dataset, "Dataset id (conan, conan_mt, reddit, gab, other)")->required();
  ingest->add_option("--format", format, "jsonl or csv (default: from extension)");
  ingest->add_flag("--permissive", permissive, "Write the valid records even if some are malformed");
  add_common(ingest, c, false, false);

  auto* split_cmd = app.add_subcommand("split", "Split pairs by hate speech, or split a typed corpus");
  split_cmd->add_option("--pairs", pairs, "Pair file");
  split_cmd->add_option("--typed", typed, "Typed counterspeech file");
  split_cmd->add_option("--rule", rule, "small or large");
  split_cmd->add_option("--train-frac", train_frac, "Train fraction for the small rule");
  split_cmd->add_option("--test-count", test_count, "Test hate speeches for the large rule");
  split_cmd->add_option("--prompt-frac", prompt_frac, "Prompting fraction for typed corpora");
  add_common(split_cmd, c, false, false);

  auto* mine = app.add_subcommand("mine-prompts", "Mine type prompts per strategy");
  mine->add_option("--typed", typed, "Typed counterspeech file");
  mine->add_option("--manual", manual, "Manual prompt registry (default: built-in)");
  mine->add_option("--prompt-frac", prompt_frac, "Prompting fraction of the typed corpus");
  mine->add_option("--prefix-len", prefix_len, "Prompt length in words");
  mine->add_option("--top-n", top_n, "Frequency prompts per type");
  add_common(mine, c, true, true);

  auto* gen = app.add_subcommand("generate", "Generate counterspeech for test hate speech");
  gen->add_option("--pairs", pairs, "Pair file")->required();
  gen->add_option("--dataset", dataset, "Dataset id");
  gen->add_option("--split", split, "Split manifest; only its test hate speech is used");
  gen->add_option("--prompts", prompts_dir, "Directory written by mine-prompts");
  gen->add_option("--backend", c.backend, "\"mock\" or a backend descriptor JSON file");
  gen->add_option("--width", width, "Requests in flight");
  add_common(gen, c, true, false);

  auto* score = app.add_subcommand("score", "Compute metric rows for generation records");
  score->add_option("--records", records, "Generation records (JSONL)")->required();
  score->add_option("--pairs", pairs, "Pair file")->required();
  score->add_option("--dataset", dataset, "Dataset id");
  score->add_option("--split", split, "Split manifest")->required();
  add_common(score, c, false, true);

  auto* report = app.add_subcommand("report", "Aggregate metric rows into report.json and report.txt");
  report->add_option("--rows", rows, "Metric rows (JSONL)")->required();
  report->add_option("--meta", meta, "Metadata written next to the rows by score");
  add_common(report, c, false, false);

  auto* corr = app.add_subcommand("correlate", "Tail sampling and correlation with human ratings");
  corr->add_option("--rows", rows, "Metric rows (JSONL)")->required();
  corr->add_option("--metric", metric, "Metric column")->required();
  corr->add_option("--n-per-tail", n_per_tail, "Samples per tail");
  corr->add_option("--sample-out", sample_out, "Write the records to rate as CSV");
  corr->add_option("--ratings", ratings, "Ratings CSV (record_id,rating)");
  add_common(corr, c, false, false);

  auto* pipe = app.add_subcommand("pipeline", "Run every stage from a run config");
  pipe->add_option("--config", config, "Run config (JSON)")->required();
  pipe->add_option("--backend", c.backend, "\"mock\" or a backend descriptor JSON file");
  pipe->add_flag("--resume", resume, "Skip stages already completed for this config");
  add_common(pipe, c, true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitFatal;
  }

  try {
    if (*ingest) return cmd_ingest(input, dataset, format, permissive, c);
    if (*split_cmd) return cmd_split(pairs, typed, rule, train_frac, test_count, prompt_frac, c);
    if (*mine) return cmd_mine(typed, manual, prompt_frac, prefix_len, top_n, c);
    if (*gen) return cmd_generate(pairs, dataset, split, prompts_dir, width, c);
    if (*score) return cmd_score(records, pairs, dataset, split, c);
    if (*report) return cmd_report(rows, meta, c);
    if (*corr) return cmd_correlate(rows, metric, n_per_tail, sample_out, ratings, c);
    if (*pipe) return cmd_pipeline(config, resume, *pipe, c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFatal;
  }
  return kExitFatal;
}
