#include <benchmark/benchmark.h>

#include "modee/fusion.hpp"
#include "modee/graphnet.hpp"
#include "modee/synthetic.hpp"
#include "modee/training.hpp"

namespace modee {
namespace {

ad::Matrix uniform_matrix(Rng& rng, ad::Index rows, ad::Index cols) {
  ad::Matrix m(rows, cols);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

void BM_GatedFusion(benchmark::State& state) {
  const auto n = static_cast<ad::Index>(state.range(0));
  Rng rng(1);
  GatedFusion fusion(16, FusionConfig{}, 1);
  const auto ht = ad::constant(uniform_matrix(rng, n, 16));
  const auto hg = ad::constant(uniform_matrix(rng, n, 16));
  ad::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(fusion.fuse(ht, hg).value().data());
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_GatedFusion)->Arg(64)->Arg(512);

void BM_GraphEncode(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto topology = state.range(1) ? Topology::Linear : Topology::Complete;
  Rng rng(2);
  GraphEncoder enc(16, GraphEncoderConfig{}, 2);
  const TokenGraph graph = build_token_graph(n, topology);
  const auto x = ad::constant(uniform_matrix(rng, static_cast<ad::Index>(n), 16));
  ad::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(enc.encode(graph, x, 3).value().data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_GraphEncode)->Args({64, 0})->Args({64, 1})->Args({512, 0});

void BM_TrainingStep(benchmark::State& state) {
  SyntheticOptions so;
  so.count = 8;
  const auto docs = generate_synthetic_corpus(so);
  RunConfig cfg = default_run_config();
  cfg.backbone.toy.d_model = 16;
  cfg.training.effective_batch = 1;
  cfg.training.ablation = static_cast<Ablation>(state.range(0));
  auto model = make_model(cfg, docs);
  TrainState train(*model, cfg.training);
  std::uint64_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(training_step(train, docs[i++ % docs.size()], cfg, i).total);
}
BENCHMARK(BM_TrainingStep)
    ->Arg(static_cast<int>(Ablation::Full))
    ->Arg(static_cast<int>(Ablation::NoContrastive))
    ->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace modee

BENCHMARK_MAIN();
