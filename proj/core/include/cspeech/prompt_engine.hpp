#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cspeech/error.hpp"
#include "cspeech/kmeans.hpp"
#include "cspeech/random.hpp"
#include "cspeech/types.hpp"

namespace cspeech {

struct ManualOrigin {
  std::size_t registry_index = 0;
};

struct FrequencyOrigin {
  std::size_t count = 0;
};

struct ClusterOrigin {
  std::size_t cluster_id = 0;
  std::size_t cluster_rank = 0;  // 0 = largest cluster
  std::size_t cluster_size = 0;
  std::size_t item_index = 0;    // position in the mined corpus
  double distance = 0.0;         // Euclidean distance to the cluster center
};

using PromptOrigin = std::variant<ManualOrigin, FrequencyOrigin, ClusterOrigin>;

/// Prompts produced by one strategy for one counterspeech type.
/// provenance[i] describes prompts[i].
struct TypePromptSet {
  CsType cs_type = CsType::kFacts;
  PromptStrategy strategy = PromptStrategy::kManual;
  std::vector<std::string> prompts;
  std::vector<PromptOrigin> provenance;
  std::optional<std::size_t> chosen_k;  // cluster strategy only
};

nlohmann::ordered_json to_json(const TypePromptSet& set);
TypePromptSet prompt_set_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Manual prompts

using PromptRegistry = std::map<CsType, TypePromptSet>;

/// Parses {"<type>": ["prompt", ...]}. Throws InvalidArgument for an unknown
/// type or a type with no prompts.
PromptRegistry load_manual_prompts(const nlohmann::json& registry);
PromptRegistry load_manual_prompts_file(const std::filesystem::path& path);

/// The built-in registry, one published example beginning per type.
nlohmann::json default_manual_registry();

// ---------------------------------------------------------------------------
// Frequency prompts

/// First prefix_len whitespace tokens, lowercased and joined by single spaces.
/// Shorter texts are returned whole. Throws InvalidArgument on blank text.
std::string extract_prefix(std::string_view text, std::size_t prefix_len = 4);

/// Groups prefixes by exact match and keeps the top_n most frequent
/// (ties broken by ascending prefix).
TypePromptSet mine_frequency_prompts(CsType type, std::span<const std::string> texts,
                                     std::size_t prefix_len = 4, std::size_t top_n = 5);

// ---------------------------------------------------------------------------
// Cluster-centered prompts

class Embedder {
public:
  virtual ~Embedder() = default;
  /// One vector per text, in order.
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
};

class EmbedError : public Error {
public:
  EmbedError(std::size_t item_index, const std::string& what)
      : Error("embedding failed at item " + std::to_string(item_index) + ": " + what),
        item_index_(item_index) {}

  std::size_t item_index() const { return item_index_; }

private:
  std::size_t item_index_;
};

struct ClusterMiningOptions {
  std::size_t top_clusters = 10;
  std::size_t reps_per_cluster = 3;
  std::size_t prefix_len = 4;
  std::size_t embed_batch_size = 32;
  ElbowOptions elbow;
};

/// Picks prompts from a fitted model: clusters ranked by size (ties to the
/// lower id), the reps_per_cluster items nearest each center of the top
/// clusters (ties to the lower item index), prefixed and de-duplicated.
TypePromptSet select_cluster_prompts(CsType type, std::span<const std::string> texts,
                                     std::span<const EmbeddingVector> vectors,
                                     const ClusterModel& model,
                                     const ClusterMiningOptions& options);

/// Embeds the texts, chooses k by the elbow rule, fits k-means and selects
/// representatives. With fewer than 3 texts every text is its own cluster.
TypePromptSet mine_cluster_prompts(CsType type, std::span<const std::string> texts,
                                   Embedder& embedder, const ClusterMiningOptions& options,
                                   std::uint64_t seed);

/// Uniform draw from the set. Throws InvalidArgument when the set is empty.
const std::string& select_prompt(const TypePromptSet& set, Rng& rng);

}  // namespace cspeech
