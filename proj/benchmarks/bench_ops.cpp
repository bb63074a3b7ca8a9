#include <benchmark/benchmark.h>

#include <random>

#include "pkgcn/nn.hpp"
#include "pkgcn/ops.hpp"
#include "pkgcn/optim.hpp"
#include "pkgcn/pkgcn.hpp"
#include "pkgcn/simgraph.hpp"

namespace {

using pkgcn::Tensor;

Tensor<float> random_tensor(pkgcn::Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  Tensor<float> t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(pkgcn::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_Conv2dForward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({batch, 1, 28, 28}, 1), k = random_tensor({32, 1, 3, 3}, 2);
  const Tensor<float> bias({32});
  for (auto _ : state) benchmark::DoNotOptimize(pkgcn::conv2d(x, k, bias));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_Conv2dForward)->Arg(32)->Arg(256);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto x = random_tensor({32, 1, 28, 28}, 1), k = random_tensor({32, 1, 3, 3}, 2),
             g = random_tensor({32, 32, 26, 26}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(pkgcn::conv2d_backward(x, k, g, false));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_Conv2dBackward);

void BM_AdaDeltaStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<pkgcn::Shape> shapes{{n}};
  pkgcn::AdaDelta<float> opt(shapes);
  auto x = random_tensor({n}, 1);
  const std::vector<Tensor<float>> g{random_tensor({n}, 2)};
  std::vector<Tensor<float>*> params{&x};
  for (auto _ : state) opt.step(params, g);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_AdaDeltaStep)->Arg(1 << 16)->Arg(700000);

pkgcn::PkGcnModel<float> make_pkgcn(pkgcn::HeadVariant variant) {
  auto base = pkgcn::build_base_model<float>("cnn1", 1);
  pkgcn::ConfusionCounts counts(10);
  for (std::size_t i = 0; i < 10; ++i) {
    counts.add(i, i, 30);
    counts.add(i, (i + 3) % 10, 2);
  }
  auto graph = pkgcn::build_similarity(counts);
  const auto adj = pkgcn::normalize(graph);
  pkgcn::PkGcnOptions opts;
  opts.variant = variant;
  return pkgcn::assemble_pkgcn(std::move(base), std::move(graph), adj, opts);
}

void BM_PkGcnForward(benchmark::State& state) {
  const auto model = make_pkgcn(state.range(0) == 1 ? pkgcn::HeadVariant::v1 : pkgcn::HeadVariant::v2);
  const auto x = random_tensor({32, 1, 28, 28}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(pkgcn::pkgcn_forward(model, x));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_PkGcnForward)->Arg(1)->Arg(2);

void BM_BaselineTrainStep(benchmark::State& state) {
  auto model = pkgcn::build_base_model<float>("cnn1", 1);
  std::vector<pkgcn::Shape> shapes;
  std::vector<Tensor<float>*> params;
  for (auto& p : model.params()) {
    shapes.push_back(p.value.shape());
    params.push_back(&p.value);
  }
  pkgcn::AdaDelta<float> opt(shapes);
  const auto x = random_tensor({32, 1, 28, 28}, 5);
  std::vector<std::int32_t> labels(32);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::int32_t>(i % 10);
  for (auto _ : state) {
    const auto fwd = pkgcn::forward(model, x);
    const auto ce = pkgcn::softmax_cross_entropy(fwd.logits, labels);
    const auto grads = pkgcn::backward(model, fwd.cache, ce.grad_logits);
    opt.step(params, grads);
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_BaselineTrainStep);

void BM_PkGcnTrainStep(benchmark::State& state) {
  auto model = make_pkgcn(state.range(0) == 1 ? pkgcn::HeadVariant::v1 : pkgcn::HeadVariant::v2);
  pkgcn::AdaDelta<float> opt(model.trainable_shapes());
  const auto x = random_tensor({32, 1, 28, 28}, 6);
  std::vector<std::int32_t> labels(32);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::int32_t>(i % 10);
  for (auto _ : state) {
    const auto fwd = pkgcn::pkgcn_forward(model, x);
    const auto ce = pkgcn::softmax_cross_entropy(fwd.logits, labels);
    const auto grads = pkgcn::pkgcn_backward(model, fwd, ce.grad_logits);
    opt.step(model.trainable(), grads);
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_PkGcnTrainStep)->Arg(1)->Arg(2);

}  // namespace

BENCHMARK_MAIN();
