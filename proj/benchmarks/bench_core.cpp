#include <benchmark/benchmark.h>

#include <random>

#include "msaff/affm.hpp"
#include "msaff/model.hpp"
#include "msaff/msstfe.hpp"
#include "msaff/ops.hpp"

namespace {

using namespace msaff;

void BM_Conv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  std::mt19937_64 rng(7);
  Tensor x = Tensor::randn({4, c, 32, 22}, rng);
  Tensor w = Tensor::randn({c, c, 3, 3}, rng, 0.1);
  Tensor b = Tensor::randn({c}, rng, 0.1);
  for (auto _ : state) {
    Tensor y = conv2d(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetItemsProcessed(state.iterations() * 4ll * c * c * 32 * 22 * 9);
}
BENCHMARK(BM_Conv2d)->Arg(32)->Arg(64)->Arg(128);

void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(7);
  Tensor a = Tensor::randn({n, n}, rng);
  Tensor b = Tensor::randn({n, n}, rng);
  for (auto _ : state) {
    Tensor y = matmul(a, b);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n) * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_AffmFuse(benchmark::State& state) {
  std::mt19937_64 rng(7);
  ParameterStore store;
  init_affm(store, "affm", 128, 4, 2, rng);
  Tensor img = Tensor::randn({128, 32}, rng);
  Tensor ske = Tensor::randn({128, 17}, rng);
  for (auto _ : state) {
    Tensor y = affm_fuse(img, ske, store, "affm", 4, 2);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_AffmFuse);

void BM_MsstfeExtract(benchmark::State& state) {
  std::mt19937_64 rng(7);
  ModelConfig cfg = ModelConfig::preset_micro();
  cfg.C = 32;
  ParameterStore store;
  init_msstfe(store, "ms", 32, 16, rng);
  Tensor p = Tensor::randn({8, 32, 16}, rng);
  for (auto _ : state) {
    Tensor y = msstfe_extract(p, store, "ms", cfg);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_MsstfeExtract);

void BM_MicroForward(benchmark::State& state) {
  std::mt19937_64 rng(7);
  ModelConfig cfg = ModelConfig::preset_micro();
  MsaffModel model(cfg);
  ParameterStore store;
  model.init_params(store);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> sil(static_cast<std::size_t>(3) * cfg.height * cfg.width);
  for (double& v : sil) v = u(rng) < 0.3 ? 1.0 : 0.0;
  SilhouetteSequence s{Tensor::from_data({3, cfg.height, cfg.width}, sil), "s", "v", "c"};
  SkeletonSequence k{Tensor::randn({3, 3, 17}, rng, 0.3), "s", "v", "c"};
  for (auto _ : state) {
    GaitEmbedding e = model.forward(s, k, store);
    benchmark::DoNotOptimize(e.values.data().data());
  }
}
BENCHMARK(BM_MicroForward);

}  // namespace

BENCHMARK_MAIN();
