#include <benchmark/benchmark.h>

#include <vector>

#include "cspeech/kmeans.hpp"
#include "cspeech/random.hpp"

using namespace cspeech;

namespace {

std::vector<EmbeddingVector> blobs(std::size_t n, std::size_t dim, std::size_t centers) {
  Rng rng(5);
  std::vector<EmbeddingVector> out;
  for (std::size_t i = 0; i < n; ++i) {
    EmbeddingVector v(dim);
    for (auto& x : v) x = rng.uniform() - 0.5;
    v[i % centers % dim] += 20.0;
    out.push_back(std::move(v));
  }
  return out;
}

void BM_Kmeans(benchmark::State& state) {
  const auto data = blobs(static_cast<std::size_t>(state.range(0)), 64, 10);
  for (auto _ : state) benchmark::DoNotOptimize(kmeans(data, 10, 7).inertia);
}
BENCHMARK(BM_Kmeans)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_Elbow(benchmark::State& state) {
  const auto data = blobs(static_cast<std::size_t>(state.range(0)), 64, 10);
  ElbowOptions o;
  o.k_max = 20;
  o.n_init = 3;
  for (auto _ : state) benchmark::DoNotOptimize(choose_k_elbow(data, o, 7).k);
}
BENCHMARK(BM_Elbow)->Arg(300)->Unit(benchmark::kMillisecond);

}  // namespace
