#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cspeech {

using EmbeddingVector = std::vector<double>;

double squared_distance(std::span<const double> a, std::span<const double> b);

struct ClusterModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<EmbeddingVector> centers;
  std::vector<std::size_t> assignments;  // item -> cluster id
  double inertia = 0.0;                  // sum of squared distances to assigned centers
  std::size_t iterations = 0;
  bool converged = false;
  /// Inertia after each assignment step; non-increasing.
  std::vector<double> inertia_history;

  std::vector<std::size_t> cluster_sizes() const;
};

/// Seeded k-means++ initialization followed by Lloyd iterations until the
/// assignment no longer changes or max_iter updates have run. Ties in the
/// nearest-center search go to the lower cluster id; a cluster that loses all
/// members keeps its previous center.
///
/// Throws InvalidArgument when k == 0, n < k, dimensions differ, or a value is
/// not finite.
ClusterModel kmeans(std::span<const EmbeddingVector> vectors, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter = 300);

/// Lowest-inertia model out of n_init seeded restarts (earliest restart wins ties).
ClusterModel kmeans_best_of(std::span<const EmbeddingVector> vectors, std::size_t k,
                            std::uint64_t seed, std::size_t n_init = 10,
                            std::size_t max_iter = 300);

struct ElbowOptions {
  std::size_t k_min = 2;
  std::size_t k_max = 30;
  std::size_t n_init = 10;
  std::size_t max_iter = 300;
};

struct ElbowResult {
  std::size_t k = 0;
  std::size_t k_min = 0;
  std::size_t k_max = 0;  // after clamping to n - 1
  /// inertia[i] is the inertia for k = first_k + i, covering k_min - 1 .. k_max + 1.
  std::size_t first_k = 0;
  std::vector<double> inertia;
  /// second_difference[i] belongs to k = k_min + i.
  std::vector<double> second_difference;

  double inertia_at(std::size_t k) const { return inertia.at(k - first_k); }
};

/// Selects the k in [k_min, k_max] that maximizes
///   inertia(k - 1) - 2 * inertia(k) + inertia(k + 1),
/// smallest k on ties. k_max is clamped to n - 1. Needs n >= 3 and k_min >= 2.
ElbowResult choose_k_elbow(std::span<const EmbeddingVector> vectors, const ElbowOptions& options,
                           std::uint64_t seed);

/// Seed used for the restarts at a given k; mining refits with the same seed.
std::uint64_t elbow_seed_for_k(std::uint64_t seed, std::size_t k);

}  // namespace cspeech
