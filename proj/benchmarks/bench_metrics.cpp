#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "cspeech/random.hpp"
#include "cspeech/textmetrics.hpp"

using namespace cspeech;

namespace {

const std::vector<std::string> kWords = {"they", "work", "hard", "working", "people", "are", "not",
                                         "the",  "a",    "pay",  "taxes",   "most",   "of",  "them",
                                         "honest", "facts", "show", "that", "is", "true"};

TokenSequence sentence(Rng& rng, std::size_t n) {
  TokenSequence s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(kWords[rng.below(kWords.size())]);
  return s;
}

void BM_Gleu(benchmark::State& state) {
  Rng rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto h = sentence(rng, n);
  const auto r = sentence(rng, n);
  for (auto _ : state) benchmark::DoNotOptimize(gleu(h, r));
}
BENCHMARK(BM_Gleu)->Arg(16)->Arg(64)->Arg(256);

void BM_Meteor(benchmark::State& state) {
  Rng rng(2);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto h = sentence(rng, n);
  const auto r = sentence(rng, n);
  for (auto _ : state) benchmark::DoNotOptimize(meteor_lite(h, r));
}
BENCHMARK(BM_Meteor)->Arg(16)->Arg(32)->Arg(64);

void BM_Diversity(benchmark::State& state) {
  Rng rng(3);
  std::vector<TokenSequence> outputs;
  for (int i = 0; i < state.range(0); ++i) outputs.push_back(sentence(rng, 30));
  for (auto _ : state) benchmark::DoNotOptimize(diversity(outputs));
}
BENCHMARK(BM_Diversity)->Arg(50)->Arg(200);

void BM_Novelty(benchmark::State& state) {
  Rng rng(4);
  std::vector<TokenSequence> corpus;
  for (int i = 0; i < state.range(0); ++i) corpus.push_back(sentence(rng, 30));
  const auto h = sentence(rng, 30);
  for (auto _ : state) benchmark::DoNotOptimize(novelty(h, corpus));
}
BENCHMARK(BM_Novelty)->Arg(1000)->Arg(5000);

void BM_Flesch(benchmark::State& state) {
  const std::string text =
      "Most of them work hard and pay taxes. Facts show that this is simply not true! Are you aware?";
  for (auto _ : state) benchmark::DoNotOptimize(flesch_reading_ease(text));
}
BENCHMARK(BM_Flesch);

}  // namespace
