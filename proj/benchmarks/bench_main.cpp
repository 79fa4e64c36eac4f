#include <benchmark/benchmark.h>

#include <random>

#include "dmrn/classifier.hpp"
#include "dmrn/contrastive.hpp"
#include "dmrn/model.hpp"
#include "dmrn/svm.hpp"

namespace {

using namespace dmrn;

Tensor<float> noise(Shape shape, std::uint64_t seed) {
  Tensor<float> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n;
  for (auto& v : t.data()) v = n(rng);
  return t;
}

void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  Tensor<float> x = noise({10, c, hw, hw}, 1), w = noise({c, c, 3, 3}, 2);
  for (auto _ : state) {
    Tape<float> tape;
    auto y = conv2d(tape.parameter(x), tape.parameter(w), {1, 1});
    tape.backward(sum(y));
    benchmark::DoNotOptimize(x.grad().data());
  }
  state.SetItemsProcessed(state.iterations() * 10);
}
BENCHMARK(BM_Conv3x3)->Args({16, 32})->Args({32, 16})->Args({64, 8})->Unit(benchmark::kMillisecond);

void BM_TwinStep(benchmark::State& state) {
  BackboneConfig cfg;
  cfg.stage_channels = {8, 16, 32, 64};
  cfg.blocks_per_stage = static_cast<std::size_t>(state.range(0));
  auto params = init_params<float>(cfg, 1);
  Tensor<float> a = noise({10, 1, 64, 64}, 3), b = noise({10, 1, 64, 64}, 4);
  const std::vector<int> labels{0, 1, 0, 1, 1, 0, 1, 1, 0, 1};
  const LossConfig loss;
  for (auto _ : state) {
    Tape<float> tape;
    TwinNetwork<float> twin(params);
    auto out = twin.forward(tape.constant(a), tape.constant(b), Mode::train, loss.stages);
    tape.backward(multi_scale_loss(out[0], out[1], labels, loss).total);
  }
  state.SetItemsProcessed(state.iterations() * 10);
}
BENCHMARK(BM_TwinStep)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_Embed(benchmark::State& state) {
  BackboneConfig cfg;
  cfg.stage_channels = {8, 16, 32, 64};
  cfg.blocks_per_stage = 1;
  auto params = init_params<float>(cfg, 1);
  Tensor<float> img = noise({1, 64, 64}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(embed(params, img, 0));
}
BENCHMARK(BM_Embed)->Unit(benchmark::kMicrosecond);

void BM_SvmTrain(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  FeatureMatrix x(n, d);
  std::vector<int> labels(n);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % 5);
    for (std::size_t j = 0; j < d; ++j) x.row(i)[j] = g(rng) + (j % 5 == i % 5 ? 1.5 : 0.0);
  }
  for (auto _ : state) benchmark::DoNotOptimize(svm_train(x, labels));
}
BENCHMARK(BM_SvmTrain)->Args({160, 16})->Args({160, 4096})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
