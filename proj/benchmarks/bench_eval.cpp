#include <benchmark/benchmark.h>

#include "sgkit/eval.hpp"
#include "sgkit/rng.hpp"
#include "bench_util.hpp"

namespace {

sgkit::Multiset make_multiset(std::uint64_t seed, std::size_t n, std::size_t alphabet) {
  sgkit::SplitMix64 rng{seed};
  sgkit::Multiset ms;
  for (std::size_t i = 0; i < n; ++i) {
    ms["term" + std::to_string(rng.bounded(alphabet))]++;
  }
  return ms;
}

void BM_Iou(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  sgkit::Multiset a = make_multiset(1, n, n / 2 + 1);
  sgkit::Multiset b = make_multiset(2, n, n / 2 + 1);
  for (auto _ : state) {
    double v = sgkit::iou(a, b);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(BM_Iou)->Arg(8)->Arg(64)->Arg(512);

void BM_SgList(benchmark::State& state) {
  sgkit::SceneGraph g = sgkit::bench::sample_graph(5);
  for (auto _ : state) {
    auto ms = sgkit::sg_list(g);
    benchmark::DoNotOptimize(ms);
  }
}
BENCHMARK(BM_SgList);

void BM_IouReport(benchmark::State& state) {
  sgkit::SceneGraph a = sgkit::bench::sample_graph(6);
  sgkit::SceneGraph b = sgkit::bench::sample_graph(7);
  for (auto _ : state) {
    auto report = sgkit::iou_report(a, b);
    benchmark::DoNotOptimize(report);
  }
}
BENCHMARK(BM_IouReport);

void BM_SelectComplex(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::vector<sgkit::DatasetRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    sgkit::DatasetRecord rec;
    rec.img_id = std::to_string(i);
    rec.graph = sgkit::bench::sample_graph(i);
    records.push_back(std::move(rec));
  }
  for (auto _ : state) {
    sgkit::BenchManifest manifest = sgkit::select_complex(records, 4);
    benchmark::DoNotOptimize(manifest);
  }
}
BENCHMARK(BM_SelectComplex)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
