#include <benchmark/benchmark.h>

#include "rpnet/attack.hpp"
#include "rpnet/harness.hpp"
#include "rpnet/rng.hpp"
#include "rpnet/tape.hpp"

namespace {

using namespace rpnet;

Tensor random_tensor(uint64_t seed, std::vector<int> shape, float lo, float hi) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (float& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const int channels = static_cast<int>(state.range(0));
  Tensor input = random_tensor(1, {100, channels, 28, 28}, 0.0f, 1.0f);
  Tensor kernel = random_tensor(2, {32, channels, 5, 5}, -0.2f, 0.2f);
  for (auto _ : state) {
    Tape tape;
    NodeId out = conv2d(tape, tape.leaf(input), tape.leaf(kernel));
    benchmark::DoNotOptimize(tape.value(out).data.data());
  }
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_Conv2dForward)->Arg(1)->Arg(15)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const ModelSpec spec = make_model_spec("fast", 15);
  const Parameters params = init_parameters(spec, 3);
  Tensor input = random_tensor(4, {100, 15, 28, 28}, 0.0f, 1.0f);
  std::vector<int32_t> labels(100);
  Rng rng(5);
  for (auto& l : labels) l = rng.uniform_int(10);
  for (auto _ : state) {
    Tape tape;
    BoundParams bound = bind_parameters(tape, params);
    NodeId l = loss(tape, forward(spec, tape, bound, tape.leaf(input)), labels);
    Grad g = backward(tape, l);
    benchmark::DoNotOptimize(g.at(bound.ids.at("conv1.kernel")).data.data());
  }
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_ForwardBackward)->Unit(benchmark::kMillisecond);

void BM_PipelineEncode(benchmark::State& state) {
  const Pipeline pipeline = pipeline_from_name("all-three");
  Tensor batch = random_tensor(6, {100, 1, 28, 28}, 0.0f, 1.0f);
  for (auto _ : state) {
    auto [enc, stats] = encode_batch(pipeline, batch);
    benchmark::DoNotOptimize(enc.thermo.data.data());
  }
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_PipelineEncode)->Unit(benchmark::kMillisecond);

void BM_LevelMask(benchmark::State& state) {
  const Pipeline pipeline = pipeline_from_name("all-three");
  Tensor batch = random_tensor(7, {100, 1, 28, 28}, 0.0f, 1.0f);
  for (auto _ : state) {
    LevelMask mask = build_level_mask(pipeline, batch, 0.3f, 15);
    benchmark::DoNotOptimize(mask.reachable->data());
  }
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_LevelMask)->Unit(benchmark::kMillisecond);

void BM_LspgaStep(benchmark::State& state) {
  const ModelSpec spec = make_model_spec("fast", 15);
  const Parameters params = init_parameters(spec, 8);
  const Pipeline pipeline = pipeline_from_name("all-three");
  Tensor batch = random_tensor(9, {20, 1, 28, 28}, 0.0f, 1.0f);
  std::vector<int32_t> labels(20);
  Rng rng(10);
  for (auto& l : labels) l = rng.uniform_int(10);
  AttackConfig cfg;
  cfg.steps = 1;
  for (auto _ : state) {
    LspgaResult r = lspga_attack(spec, params, pipeline, batch, labels, cfg, 1);
    benchmark::DoNotOptimize(r.encoded.thermo.data.data());
  }
  state.SetItemsProcessed(state.iterations() * 20);
}
BENCHMARK(BM_LspgaStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
