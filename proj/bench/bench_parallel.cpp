// Serial reference vs OpenMP paths on the three parallel kernels.
//   ./facetcoh_bench --benchmark_filter=Corpus
// Set OMP_NUM_THREADS to compare thread counts.

#include "facetcoh/coherency.hpp"
#include "facetcoh/metrics.hpp"
#include "facetcoh/stats.hpp"

#include "synthetic.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace facetcoh;

namespace {

struct CorpusFixture {
  std::vector<ClarificationRecord> reference;
  std::vector<ClarificationRecord> candidate;
  Pairing pairing;

  CorpusFixture() {
    for (const auto& l : synthetic::weakly_labeled_corpus(2000, 1)) reference.push_back(l.record);
    // Candidates: the same queries with facets from another record.
    for (std::size_t i = 0; i < reference.size(); ++i) {
      auto c = reference[(i * 7 + 3) % reference.size()];
      candidate.push_back({reference[i].query, "", c.facets, std::nullopt, Source::generated("bench")});
    }
    pairing = pair_records(reference, candidate);
  }
};

const CorpusFixture& corpus() {
  static const CorpusFixture f;
  return f;
}

CoherencyModel some_model() {
  auto m = CoherencyModel::zero();
  for (std::size_t k = 0; k < m.weights.size(); ++k) m.weights[k] = 0.1 * static_cast<double>(k) - 0.3;
  return m;
}

void BM_EvaluateCorpusSerial(benchmark::State& state) {
  const HashedTrigramProvider p;
  for (auto _ : state) benchmark::DoNotOptimize(serial::evaluate_corpus(corpus().pairing, p));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(corpus().pairing.pairs.size()));
}

void BM_EvaluateCorpusOmp(benchmark::State& state) {
  const HashedTrigramProvider p;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_corpus(corpus().pairing, p));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(corpus().pairing.pairs.size()));
}

void BM_PredictSerial(benchmark::State& state) {
  const HashedTrigramProvider p;
  const auto model = some_model();
  for (auto _ : state) benchmark::DoNotOptimize(serial::predict_records(model, corpus().reference, p));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(corpus().reference.size()));
}

void BM_PredictOmp(benchmark::State& state) {
  const HashedTrigramProvider p;
  const auto model = some_model();
  for (auto _ : state) benchmark::DoNotOptimize(predict_records(model, corpus().reference, p));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(corpus().reference.size()));
}

std::pair<std::vector<double>, std::vector<double>> samples() {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  std::vector<double> a(300), b(300);
  for (auto& x : a) x = normal(rng) + 0.1;
  for (auto& x : b) x = normal(rng);
  return {a, b};
}

void BM_PermutationSerial(benchmark::State& state) {
  const auto [a, b] = samples();
  for (auto _ : state)
    benchmark::DoNotOptimize(serial::subset_significance(a, b, static_cast<std::size_t>(state.range(0)), 7));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_PermutationOmp(benchmark::State& state) {
  const auto [a, b] = samples();
  for (auto _ : state)
    benchmark::DoNotOptimize(subset_significance(a, b, static_cast<std::size_t>(state.range(0)), 7));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_EvaluateCorpusSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvaluateCorpusOmp)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_PredictSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictOmp)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_PermutationSerial)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PermutationOmp)->Arg(10000)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
