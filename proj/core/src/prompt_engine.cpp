#include "cspeech/prompt_engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "cspeech/text_util.hpp"

namespace cspeech {
namespace {

using ojson = nlohmann::ordered_json;

void push_unique(TypePromptSet& set, std::unordered_set<std::string>& seen, std::string prompt,
                 PromptOrigin origin) {
  if (!seen.insert(prompt).second) return;
  set.prompts.push_back(std::move(prompt));
  set.provenance.push_back(origin);
}

}  // namespace

nlohmann::ordered_json to_json(const TypePromptSet& set) {
  ojson j;
  j["type"] = to_string(set.cs_type);
  j["strategy"] = to_string(set.strategy);
  j["prompts"] = set.prompts;
  if (set.chosen_k) j["k"] = *set.chosen_k;
  ojson prov = ojson::array();
  for (const auto& origin : set.provenance) {
    ojson o;
    if (const auto* m = std::get_if<ManualOrigin>(&origin)) {
      o["registry_index"] = m->registry_index;
    } else if (const auto* f = std::get_if<FrequencyOrigin>(&origin)) {
      o["count"] = f->count;
    } else {
      const auto& c = std::get<ClusterOrigin>(origin);
      o["cluster_id"] = c.cluster_id;
      o["cluster_rank"] = c.cluster_rank;
      o["cluster_size"] = c.cluster_size;
      o["item_index"] = c.item_index;
      o["distance"] = c.distance;
    }
    prov.push_back(std::move(o));
  }
  j["provenance"] = std::move(prov);
  return j;
}

TypePromptSet prompt_set_from_json(const nlohmann::json& j) {
  try {
    TypePromptSet set;
    set.cs_type = parse_cs_type(j.at("type").get<std::string>());
    set.strategy = parse_strategy(j.at("strategy").get<std::string>());
    set.prompts = j.at("prompts").get<std::vector<std::string>>();
    if (j.contains("k")) set.chosen_k = j.at("k").get<std::size_t>();
    for (const auto& o : j.value("provenance", nlohmann::json::array())) {
      if (o.contains("count")) {
        set.provenance.emplace_back(FrequencyOrigin{o.at("count").get<std::size_t>()});
      } else if (o.contains("cluster_id")) {
        set.provenance.emplace_back(ClusterOrigin{
            o.at("cluster_id").get<std::size_t>(), o.at("cluster_rank").get<std::size_t>(),
            o.at("cluster_size").get<std::size_t>(), o.at("item_index").get<std::size_t>(),
            o.at("distance").get<double>()});
      } else {
        set.provenance.emplace_back(ManualOrigin{o.value("registry_index", std::size_t{0})});
      }
    }
    if (!set.provenance.empty() && set.provenance.size() != set.prompts.size()) {
      throw DataError("prompt set provenance does not match its prompts");
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed prompt set: ") + e.what());
  }
}

PromptRegistry load_manual_prompts(const nlohmann::json& registry) {
  if (!registry.is_object()) throw InvalidArgument("prompt registry must be a JSON object");
  PromptRegistry out;
  for (const auto& [name, prompts] : registry.items()) {
    const CsType type = parse_cs_type(name);
    if (!prompts.is_array() || prompts.empty()) {
      throw InvalidArgument("prompt registry: type '" + name + "' has no prompts");
    }
    TypePromptSet set;
    set.cs_type = type;
    set.strategy = PromptStrategy::kManual;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      if (!prompts[i].is_string() || trim(prompts[i].get<std::string>()).empty()) {
        throw InvalidArgument("prompt registry: type '" + name + "' has a blank or non-string prompt");
      }
      push_unique(set, seen, prompts[i].get<std::string>(), ManualOrigin{i});
    }
    if (out.contains(type)) {
      throw InvalidArgument("prompt registry: type '" + name + "' declared twice");
    }
    out.emplace(type, std::move(set));
  }
  return out;
}

PromptRegistry load_manual_prompts_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read prompt registry: " + path.string());
  try {
    return load_manual_prompts(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("prompt registry " + path.string() + ": " + e.what());
  }
}

nlohmann::json default_manual_registry() {
  return nlohmann::json{
      {"facts", {"This is a fact"}},
      {"hypocrisy", {"In contradiction"}},
      {"humor", {"This is funny"}},
      {"affiliation", {"I also belong"}},
      {"question", {"Are you aware of"}},
      {"denouncing", {"Please do not say"}},
  };
}

std::string extract_prefix(std::string_view text, std::size_t prefix_len) {
  if (prefix_len == 0) throw InvalidArgument("extract_prefix: prefix_len must be >= 1");
  auto tokens = split_whitespace(text);
  if (tokens.empty()) throw InvalidArgument("extract_prefix: empty text");
  if (tokens.size() > prefix_len) tokens.resize(prefix_len);
  return to_lower_ascii(join(tokens, " "));
}

TypePromptSet mine_frequency_prompts(CsType type, std::span<const std::string> texts,
                                     std::size_t prefix_len, std::size_t top_n) {
  if (texts.empty()) throw InvalidArgument("mine_frequency_prompts: no items");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& t : texts) ++counts[extract_prefix(t, prefix_len)];

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > top_n) ranked.resize(top_n);

  TypePromptSet set;
  set.cs_type = type;
  set.strategy = PromptStrategy::kFrequency;
  for (auto& [prefix, count] : ranked) {
    set.prompts.push_back(prefix);
    set.provenance.emplace_back(FrequencyOrigin{count});
  }
  return set;
}

TypePromptSet select_cluster_prompts(CsType type, std::span<const std::string> texts,
                                     std::span<const EmbeddingVector> vectors,
                                     const ClusterModel& model,
                                     const ClusterMiningOptions& options) {
  if (texts.size() != vectors.size() || model.assignments.size() != texts.size()) {
    throw InvalidArgument("select_cluster_prompts: texts, vectors and model disagree in size");
  }
  const auto sizes = model.cluster_sizes();
  std::vector<std::size_t> order(model.k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });

  TypePromptSet set;
  set.cs_type = type;
  set.strategy = PromptStrategy::kCluster;
  set.chosen_k = model.k;
  std::unordered_set<std::string> seen;

  const std::size_t n_clusters = std::min(options.top_clusters, model.k);
  for (std::size_t rank = 0; rank < n_clusters; ++rank) {
    const std::size_t c = order[rank];
    if (sizes[c] == 0) continue;
    std::vector<std::pair<double, std::size_t>> members;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (model.assignments[i] == c) {
        members.emplace_back(std::sqrt(squared_distance(vectors[i], model.centers[c])), i);
      }
    }
    std::sort(members.begin(), members.end());
    const std::size_t take = std::min(options.reps_per_cluster, members.size());
    for (std::size_t r = 0; r < take; ++r) {
      const auto [dist, idx] = members[r];
      push_unique(set, seen, extract_prefix(texts[idx], options.prefix_len),
                  ClusterOrigin{c, rank, sizes[c], idx, dist});
    }
  }
  return set;
}

TypePromptSet mine_cluster_prompts(CsType type, std::span<const std::string> texts,
                                   Embedder& embedder, const ClusterMiningOptions& options,
                                   std::uint64_t seed) {
  if (texts.empty()) throw InvalidArgument("mine_cluster_prompts: no items");
  const std::size_t batch = std::max<std::size_t>(1, options.embed_batch_size);

  std::vector<EmbeddingVector> vectors;
  vectors.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += batch) {
    const auto chunk = texts.subspan(start, std::min(batch, texts.size() - start));
    std::vector<EmbeddingVector> got;
    try {
      got = embedder.embed(chunk);
    } catch (const EmbedError& e) {
      throw EmbedError(start + e.item_index(), e.what());
    } catch (const std::exception& e) {
      throw EmbedError(start, e.what());
    }
    if (got.size() != chunk.size()) {
      throw EmbedError(start, "embedder returned " + std::to_string(got.size()) +
                                  " vectors for " + std::to_string(chunk.size()) + " texts");
    }
    for (auto& v : got) vectors.push_back(std::move(v));
  }

  std::size_t k = texts.size();
  if (texts.size() >= 3) k = choose_k_elbow(vectors, options.elbow, seed).k;
  const ClusterModel model = kmeans_best_of(vectors, k, elbow_seed_for_k(seed, k),
                                            options.elbow.n_init, options.elbow.max_iter);
  return select_cluster_prompts(type, texts, vectors, model, options);
}

const std::string& select_prompt(const TypePromptSet& set, Rng& rng) {
  if (set.prompts.empty()) throw InvalidArgument("select_prompt: empty prompt set");
  return set.prompts[rng.below(set.prompts.size())];
}

}  // namespace cspeech
