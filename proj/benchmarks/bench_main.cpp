#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "pilot/dls.hpp"
#include "pilot/embed.hpp"
#include "pilot/encoder.hpp"
#include "pilot/mrl.hpp"
#include "pilot/random.hpp"
#include "pilot/synthetic.hpp"

namespace {

using namespace pilot;

// Args: number of unlabeled samples, embedding dim. 10% as many positives.
void BM_PrototypeDistances(benchmark::State& state) {
  const auto n_u = static_cast<std::size_t>(state.range(0));
  synthetic::ClusterSpec spec;
  spec.n_positive = n_u / 10 + n_u / 2;
  spec.n_negative = n_u / 2;
  spec.dim = static_cast<std::size_t>(state.range(1));
  const auto data = synthetic::gaussian_clusters(spec);
  std::vector<std::string> pos(data.positive_ids.begin(), data.positive_ids.begin() + n_u / 10);
  std::vector<std::string> unl(data.positive_ids.begin() + n_u / 10, data.positive_ids.end());
  unl.insert(unl.end(), data.negative_ids.begin(), data.negative_ids.end());
  const dls::PrototypeConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(dls::prototype_distances(data.embeddings, pos, unl, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(unl.size()));
}
BENCHMARK(BM_PrototypeDistances)->Args({1000, 64})->Args({1000, 768})->Args({4000, 64})->Unit(benchmark::kMillisecond);

void BM_HashEmbed(benchmark::State& state) {
  synthetic::CodeCorpusSpec spec;
  spec.n_samples = 500;
  const auto samples = synthetic::code_corpus(spec);
  const embed::EmbedderConfig cfg{static_cast<std::size_t>(state.range(0)), static_cast<int>(state.range(1)), true};
  for (auto _ : state) benchmark::DoNotOptimize(embed::hash_embed(samples, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(samples.size()));
}
BENCHMARK(BM_HashEmbed)->Args({256, 1})->Args({768, 3})->Unit(benchmark::kMillisecond);

void BM_Grad(benchmark::State& state) {
  const auto objective = static_cast<encoder::Objective>(state.range(0));
  const std::size_t dim = 256, n = 32, B = 8;
  Rng rng(1);
  encoder::TrainingSet data;
  data.dim = dim;
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : x) v = rng.normal();
    data.add("r" + std::to_string(i), std::span<const double>(x), static_cast<int>(i % 2));
  }
  encoder::Minibatch mb;
  for (std::size_t r = 0; r < n; ++r) {
    mb.rows.push_back(r);
    const auto draw = mrl::draw_contrast_members(r, data.labels, B, rng);
    mb.contrasts.push_back({r, draw.members, draw.positive_index});
  }
  const auto model = encoder::EncoderModel::initialize({dim, 64, 16}, 2);
  const encoder::LossOptions opt{objective, {}};
  for (auto _ : state) benchmark::DoNotOptimize(encoder::grad(model, data, mb, opt));
}
BENCHMARK(BM_Grad)->DenseRange(0, 3)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
