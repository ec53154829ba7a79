#include <benchmark/benchmark.h>

#include "protoset/dataset.hpp"
#include "protoset/matching.hpp"
#include "protoset/training.hpp"

namespace protoset {
namespace {

TrainConfig bench_config() {
  TrainConfig cfg;
  cfg.apply_desk_preset();
  cfg.d_in = 32;
  cfg.seed = 0;
  cfg.predictor_init_std = 0.5;
  return cfg;
}

Mat random_media(Index n, Index dim, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  return Mat::NullaryExpr(n, dim, [&] { return normal(rng); });
}

void BM_Encode(benchmark::State& state) {
  const Model model = make_model(bench_config());
  const Mat x = random_media(state.range(0), model.encoder.input_dim(), 1);
  for (auto _ : state) benchmark::DoNotOptimize(encode_set(model.encoder, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Encode)->RangeMultiplier(4)->Range(16, 1024);

void BM_EmbedSet(benchmark::State& state) {
  const TrainConfig cfg = bench_config();
  const Model model = make_model(cfg);
  const Mat x = random_media(state.range(0), model.encoder.input_dim(), 2);
  for (auto _ : state) benchmark::DoNotOptimize(embed_set(model, x, cfg.eps_mass));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EmbedSet)->RangeMultiplier(4)->Range(16, 1024);

void BM_Energy(benchmark::State& state) {
  const Index n = state.range(0);
  const Mat d = random_media(n, n, 3).cwiseAbs();
  for (auto _ : state) benchmark::DoNotOptimize(energy(d, 10.0).value);
}
BENCHMARK(BM_Energy)->RangeMultiplier(4)->Range(4, 1024);

// Scoring from cached embeddings, as a gallery would.
void BM_MatchEmbeddings(benchmark::State& state) {
  const TrainConfig cfg = bench_config();
  const Model model = make_model(cfg);
  const Index n = state.range(0);
  const SetEmbedding a = embed_set(model, random_media(n, model.encoder.input_dim(), 4), cfg.eps_mass);
  const SetEmbedding b = embed_set(model, random_media(n, model.encoder.input_dim(), 5), cfg.eps_mass);
  MatchOptions opts;
  opts.mode = state.range(1) == 0 ? MatchMode::media_level : MatchMode::prototype_level;
  MatchStats stats;
  for (auto _ : state) {
    stats = {};
    benchmark::DoNotOptimize(match_embeddings(a, b, opts, &stats));
  }
  state.counters["distance_evaluations"] = static_cast<double>(stats.distance_evaluations);
  state.SetLabel(state.range(1) == 0 ? "media" : "prototype");
}
BENCHMARK(BM_MatchEmbeddings)->ArgsProduct({{16, 64, 256}, {0, 1}});

void BM_PairLossAndGrad(benchmark::State& state) {
  const TrainConfig cfg = bench_config();
  const Model model = make_model(cfg);
  const Mat a = random_media(cfg.r, cfg.d_in, 6);
  const Mat b = random_media(cfg.r, cfg.d_in, 7);
  Model grads = zeros_like(model);
  for (auto _ : state) {
    benchmark::DoNotOptimize(pair_loss_and_grad(model, a, b, 1, cfg, grads).joint);
  }
}
BENCHMARK(BM_PairLossAndGrad);

}  // namespace
}  // namespace protoset

BENCHMARK_MAIN();
