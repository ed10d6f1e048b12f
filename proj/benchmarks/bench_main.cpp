#include <benchmark/benchmark.h>

#include <random>

#include <spdlog/spdlog.h>

#include "xmixup/analysis.hpp"
#include "xmixup/mixup.hpp"
#include "xmixup/pipeline.hpp"

using namespace xmixup;

namespace {

const DatasetBundle& bundle() {
  static const DatasetBundle b = gen_bundle(TaskKind::classification, {64, 8}, ToyLanguageSpec{}, 1);
  return b;
}

void BM_EncodeSingle(benchmark::State& state) {
  const ModelParams m = init_model(EncoderConfig{}, TaskKind::classification, 3, 1);
  const auto& ex = bundle().train.front();
  for (auto _ : state) {
    Tape tape;
    BoundParams p(tape, m, false);
    benchmark::DoNotOptimize(encode_single(p, ex.tgt).last().value().storage().data());
  }
}
BENCHMARK(BM_EncodeSingle);

void BM_EncodePairForward(benchmark::State& state) {
  const ModelParams m = init_model(EncoderConfig{}, TaskKind::classification, 3, 1);
  const auto& ex = bundle().train.front();
  MixupConfig mix;
  mix.mix_layer = static_cast<int>(state.range(0));
  for (auto _ : state) {
    Tape tape;
    BoundParams p(tape, m, false);
    benchmark::DoNotOptimize(encode_pair(p, ex.src, ex.tgt, mix).lambda->item());
  }
}
BENCHMARK(BM_EncodePairForward)->Arg(1)->Arg(2);

void BM_ExampleObjectiveBackward(benchmark::State& state) {
  const ModelParams m = init_model(EncoderConfig{}, TaskKind::classification, 3, 1);
  const TrainConfig cfg = TrainConfig::defaults_for(TaskKind::classification);
  const auto& ex = bundle().train.front();
  for (auto _ : state) {
    Tape tape;
    BoundParams p(tape, m, true);
    const auto grads = backward(tape, example_objective(p, cfg, ex, false).total);
    benchmark::DoNotOptimize(grads.size());
  }
}
BENCHMARK(BM_ExampleObjectiveBackward);

void BM_TrainEpoch(benchmark::State& state) {
  TrainConfig cfg = TrainConfig::defaults_for(TaskKind::classification);
  cfg.epochs = 1;
  if (state.range(0) == 0) cfg.toggles = Toggles::all_off();
  for (auto _ : state) benchmark::DoNotOptimize(train(cfg, bundle()).step);
  state.SetItemsProcessed(state.iterations() * static_cast<long>(bundle().train.size()));
}
BENCHMARK(BM_TrainEpoch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Cka(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Tensor x = Tensor::matrix(n, 32), y = Tensor::matrix(n, 32);
  for (double& v : x.storage()) v = g(rng);
  for (double& v : y.storage()) v = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(cka(x, y));
}
BENCHMARK(BM_Cka)->Arg(100)->Arg(1000);

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
