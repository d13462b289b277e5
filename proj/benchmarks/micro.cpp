#include "vaelab/diffnet.hpp"
#include "vaelab/models.hpp"
#include "vaelab/numkit.hpp"
#include "vaelab/rpca.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace vaelab;

void BM_Svd(benchmark::State& state) {
  const Index n = state.range(0);
  const DenseMatrix m = sample_gaussian(RngStream(1, "bench/svd"), n, n);
  for (auto _ : state) benchmark::DoNotOptimize(svd(m));
}
BENCHMARK(BM_Svd)->Arg(30)->Arg(100)->Arg(300);

void BM_ForwardBackward(benchmark::State& state) {
  const Index width = state.range(0);
  auto eng = RngStream(2, "bench/net").engine();
  const Index dims[] = {30, width, width, 30};
  const MlpNet net = MlpNet::he_init(dims, Activation::relu, Activation::identity, eng);
  const DenseMatrix x = sample_gaussian(eng, 100, 30);
  const DenseMatrix g = sample_gaussian(eng, 100, 30);
  for (auto _ : state) {
    const ForwardTrace tr = forward(net, x);
    benchmark::DoNotOptimize(backward(net, tr, g));
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(64)->Arg(256);

void BM_RpcaAlm(benchmark::State& state) {
  const Index n = state.range(0);
  const DenseMatrix u = sample_gaussian(RngStream(3, "bench/u"), n, 2);
  const DenseMatrix v = sample_gaussian(RngStream(3, "bench/v"), 2, n);
  DenseMatrix x = u * v;
  for (Index i = 0; i < n; ++i) x(i, (i * 7) % n) += 5.0;
  for (auto _ : state) benchmark::DoNotOptimize(rpca_alm(x));
}
BENCHMARK(BM_RpcaAlm)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_VaeBatchLoss(benchmark::State& state) {
  const Architecture arch{30, 20, {64, 64}, {64, 64}};
  const GenerativeModel model = make_model(ModelKind::vae, arch, RngStream(4, "bench/model"));
  const DenseMatrix xb = sample_gaussian(RngStream(4, "bench/x"), 100, 30);
  TrainConfig cfg;
  cfg.tau = static_cast<int>(state.range(0));
  const DenseMatrix eps = sample_gaussian(RngStream(4, "bench/eps"), 100 * cfg.tau, 20);
  for (auto _ : state) benchmark::DoNotOptimize(vae_batch_loss(model, xb, cfg, eps));
}
BENCHMARK(BM_VaeBatchLoss)->Arg(1)->Arg(5);

}  // namespace
BENCHMARK_MAIN();
