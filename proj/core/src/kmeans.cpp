#include "cspeech/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cspeech/error.hpp"
#include "cspeech/random.hpp"

namespace cspeech {
namespace {

std::size_t validate(std::span<const EmbeddingVector> vectors) {
  if (vectors.empty()) throw InvalidArgument("kmeans: no vectors");
  const std::size_t dim = vectors.front().size();
  if (dim == 0) throw InvalidArgument("kmeans: zero-dimensional vectors");
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != dim) {
      throw InvalidArgument("kmeans: vector " + std::to_string(i) + " has dim " +
                            std::to_string(vectors[i].size()) + ", expected " +
                            std::to_string(dim));
    }
    for (double v : vectors[i]) {
      if (!std::isfinite(v)) {
        throw InvalidArgument("kmeans: vector " + std::to_string(i) + " has a non-finite value");
      }
    }
  }
  return dim;
}

std::vector<EmbeddingVector> init_plus_plus(std::span<const EmbeddingVector> vectors,
                                            std::size_t k, Rng& rng) {
  const std::size_t n = vectors.size();
  std::vector<EmbeddingVector> centers;
  centers.reserve(k);
  centers.push_back(vectors[rng.below(n)]);

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(vectors[i], centers[0]);

  while (centers.size() < k) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        pick = i;  // last positive-weight item absorbs rounding at the top end
        acc += d2[i];
        if (acc > target) break;
      }
    } else {
      pick = rng.below(n);
    }
    centers.push_back(vectors[pick]);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(vectors[i], centers.back()));
    }
  }
  return centers;
}

// Returns the inertia; writes nearest-center ids (lowest id on ties).
double assign(std::span<const EmbeddingVector> vectors, const std::vector<EmbeddingVector>& centers,
              std::vector<std::size_t>& assignments) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_c = 0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double d = squared_distance(vectors[i], centers[c]);
      if (d < best) {
        best = d;
        best_c = c;
      }
    }
    assignments[i] = best_c;
    inertia += best;
  }
  return inertia;
}

void update_centers(std::span<const EmbeddingVector> vectors,
                    const std::vector<std::size_t>& assignments,
                    std::vector<EmbeddingVector>& centers) {
  const std::size_t dim = centers.front().size();
  std::vector<EmbeddingVector> sums(centers.size(), EmbeddingVector(dim, 0.0));
  std::vector<std::size_t> counts(centers.size(), 0);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    auto& s = sums[assignments[i]];
    for (std::size_t d = 0; d < dim; ++d) s[d] += vectors[i][d];
    ++counts[assignments[i]];
  }
  for (std::size_t c = 0; c < centers.size(); ++c) {
    if (counts[c] == 0) continue;
    for (std::size_t d = 0; d < dim; ++d) {
      centers[c][d] = sums[c][d] / static_cast<double>(counts[c]);
    }
  }
}

}  // namespace

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<std::size_t> ClusterModel::cluster_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t a : assignments) ++sizes[a];
  return sizes;
}

ClusterModel kmeans(std::span<const EmbeddingVector> vectors, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter) {
  if (k == 0) throw InvalidArgument("kmeans: k must be >= 1");
  const std::size_t dim = validate(vectors);
  if (vectors.size() < k) {
    throw InvalidArgument("kmeans: " + std::to_string(vectors.size()) + " vectors, k = " +
                          std::to_string(k));
  }

  Rng rng(seed);
  ClusterModel model;
  model.k = k;
  model.dim = dim;
  model.centers = init_plus_plus(vectors, k, rng);
  model.assignments.assign(vectors.size(), 0);

  std::vector<std::size_t> previous;
  while (true) {
    model.inertia = assign(vectors, model.centers, model.assignments);
    model.inertia_history.push_back(model.inertia);
    if (model.assignments == previous) {
      model.converged = true;
      break;
    }
    if (model.iterations == max_iter) break;
    previous = model.assignments;
    update_centers(vectors, model.assignments, model.centers);
    ++model.iterations;
  }
  return model;
}

ClusterModel kmeans_best_of(std::span<const EmbeddingVector> vectors, std::size_t k,
                            std::uint64_t seed, std::size_t n_init, std::size_t max_iter) {
  if (n_init == 0) throw InvalidArgument("kmeans_best_of: n_init must be >= 1");
  ClusterModel best = kmeans(vectors, k, derive_seed(seed, std::uint64_t{0}), max_iter);
  for (std::size_t r = 1; r < n_init; ++r) {
    ClusterModel m = kmeans(vectors, k, derive_seed(seed, std::uint64_t{r}), max_iter);
    if (m.inertia < best.inertia) best = std::move(m);
  }
  return best;
}

std::uint64_t elbow_seed_for_k(std::uint64_t seed, std::size_t k) {
  return derive_seed(derive_seed(seed, "elbow"), std::uint64_t{k});
}

ElbowResult choose_k_elbow(std::span<const EmbeddingVector> vectors, const ElbowOptions& options,
                           std::uint64_t seed) {
  const std::size_t n = vectors.size();
  if (n < 3) throw InvalidArgument("choose_k_elbow: need at least 3 vectors");
  if (options.k_min < 2) throw InvalidArgument("choose_k_elbow: k_min must be >= 2");

  ElbowResult r;
  r.k_max = std::min(options.k_max, n - 1);
  r.k_min = std::min(options.k_min, r.k_max);
  r.first_k = r.k_min - 1;
  for (std::size_t k = r.first_k; k <= r.k_max + 1; ++k) {
    r.inertia.push_back(
        kmeans_best_of(vectors, k, elbow_seed_for_k(seed, k), options.n_init, options.max_iter)
            .inertia);
  }

  const double tol = 1e-12 * std::max(1.0, r.inertia.front());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = r.k_min; k <= r.k_max; ++k) {
    const double sd = r.inertia_at(k - 1) - 2.0 * r.inertia_at(k) + r.inertia_at(k + 1);
    r.second_difference.push_back(sd);
    if (sd > best + tol) {
      best = sd;
      r.k = k;
    }
  }
  return r;
}

}  // namespace cspeech
