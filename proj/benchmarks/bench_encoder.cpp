#include <benchmark/benchmark.h>

#include "sgkit/encoder.hpp"
#include "bench_util.hpp"

namespace {

void BM_HashEmbed(benchmark::State& state) {
  sgkit::HashEmbeddingBackend backend(static_cast<std::size_t>(state.range(0)), 1);
  std::uint64_t i = 0;
  for (auto _ : state) {
    sgkit::Vec v = backend.embed("token-" + std::to_string(i++ % 64));
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(BM_HashEmbed)->Arg(64)->Arg(512);

void BM_Lower(benchmark::State& state) {
  sgkit::HashEmbeddingBackend backend(64, 1);
  sgkit::SceneGraph g = sgkit::bench::sample_graph(3);
  for (auto _ : state) {
    auto lowered = sgkit::lower(g, backend);
    benchmark::DoNotOptimize(lowered);
  }
}
BENCHMARK(BM_Lower);

void BM_GnnForward(benchmark::State& state) {
  const std::size_t dim = static_cast<std::size_t>(state.range(0));
  sgkit::HashEmbeddingBackend backend(dim, 1);
  sgkit::SceneGraph g = sgkit::bench::sample_graph(3);
  auto lowered = sgkit::lower(g, backend);
  sgkit::EncoderParams params = sgkit::EncoderParams::seeded(dim, dim, 5, 7);
  for (auto _ : state) {
    auto states = sgkit::gnn_forward(lowered.value(), params);
    benchmark::DoNotOptimize(states);
  }
}
BENCHMARK(BM_GnnForward)->Arg(64)->Arg(256)->Arg(512)->Unit(benchmark::kMicrosecond);

void BM_Assemble(benchmark::State& state) {
  const std::size_t dim = static_cast<std::size_t>(state.range(0));
  sgkit::HashEmbeddingBackend backend(dim, 1);
  sgkit::SceneGraph g = sgkit::bench::sample_graph(3);
  sgkit::EncoderParams params = sgkit::EncoderParams::seeded(dim, dim, 5, 7);
  params.alpha = 0.5;
  for (auto _ : state) {
    auto embedding = sgkit::assemble(g, backend, params);
    benchmark::DoNotOptimize(embedding);
  }
}
BENCHMARK(BM_Assemble)->Arg(64)->Arg(512)->Unit(benchmark::kMicrosecond);

void BM_LossWithGrads(benchmark::State& state) {
  const std::size_t dim = 8, hidden = 6, layers = 3, latent = 4;
  sgkit::HashEmbeddingBackend backend(dim, 2);
  sgkit::SceneGraph g = sgkit::bench::sample_graph(4);
  sgkit::EncoderParams params = sgkit::EncoderParams::seeded(dim, hidden, layers, 5);
  params.alpha = 0.8;
  sgkit::ToyLinearDenoiser denoiser(latent, dim, 6);
  sgkit::LossConfig loss;
  loss.x0 = {0.1, -0.2, 0.3, 0.4};
  loss.eps = {0.5, 0.2, -0.1, 0.3};
  loss.schedule = sgkit::NoiseSchedule::linear(10, 0.99, 0.05);
  loss.timestep = 4;
  for (auto _ : state) {
    sgkit::EncoderGrads grads;
    auto value = sgkit::sg_loss_with_grads(g, backend, params, denoiser, loss, &grads);
    benchmark::DoNotOptimize(value);
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_LossWithGrads)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
