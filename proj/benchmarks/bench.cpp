#include <benchmark/benchmark.h>

#include "arc/rng.hpp"
#include "arc/serializer.hpp"
#include "arc/tinylm.hpp"
#include "arc/views.hpp"

namespace {

using namespace arc;

Grid bench_grid(int h, int w) {
  Rng rng(17);
  std::vector<Color> cells(static_cast<std::size_t>(h) * w);
  for (Color& c : cells) c = static_cast<Color>(rng.next_below(kNumColors));
  return Grid(h, w, std::move(cells));
}

void BM_EncodeDecodeGrid(benchmark::State& state) {
  const Grid g = bench_grid(static_cast<int>(state.range(0)), static_cast<int>(state.range(0)));
  for (auto _ : state) {
    const TokenSeq seq = encode_grid(g);
    benchmark::DoNotOptimize(decode_grid(seq));
  }
}
BENCHMARK(BM_EncodeDecodeGrid)->Arg(5)->Arg(15)->Arg(30);

void BM_ApplyView(benchmark::State& state) {
  const Grid g = bench_grid(30, 30);
  Rng rng(3);
  std::array<Color, kNumColors> table;
  for (int i = 0; i < kNumColors; ++i) table[static_cast<std::size_t>(i)] = Color(i);
  rng.shuffle(table.data(), table.size());
  const View v{GeometricOp::Rot90, ColorMap::from_table(table)};
  for (auto _ : state) {
    benchmark::DoNotOptimize(apply_view(v, g));
  }
}
BENCHMARK(BM_ApplyView);

ModelConfig bench_config(int d_model, int n_layers) {
  ModelConfig cfg;
  cfg.d_model = d_model;
  cfg.n_heads = 4;
  cfg.head_dim = d_model / 4;
  cfg.n_layers = n_layers;
  cfg.d_ffn = 4 * d_model;
  cfg.max_ctx = 512;
  return cfg;
}

void BM_Forward(benchmark::State& state) {
  const ModelConfig cfg = bench_config(static_cast<int>(state.range(0)), 2);
  const Params p = init_model<float>(cfg, 1);
  Rng rng(9);
  TokenSeq tokens(static_cast<std::size_t>(state.range(1)));
  for (TokenId& t : tokens) t = static_cast<TokenId>(rng.next_below(tok::kVocabSize));
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward<float>(cfg, p, tokens));
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_Forward)->Args({64, 128})->Args({128, 256})->Args({128, 512});

void BM_TrainStep(benchmark::State& state) {
  const ModelConfig cfg = bench_config(128, 2);
  const Params p = init_model<float>(cfg, 1);
  Rng rng(9);
  TokenSeq tokens(256);
  std::vector<std::uint8_t> mask(256, 1);
  mask[0] = 0;
  for (TokenId& t : tokens) t = static_cast<TokenId>(rng.next_below(tok::kVocabSize));
  Params g = Params::zeros(cfg);
  const std::vector<EpisodeBatchItem> batch{{tokens, mask, 1}};
  for (auto _ : state) {
    g.set_zero();
    benchmark::DoNotOptimize(grads<float>(cfg, p, batch, g, true));
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
