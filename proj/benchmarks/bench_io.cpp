#include <benchmark/benchmark.h>

#include <sstream>

#include "sgkit/io.hpp"
#include "sgkit/model.hpp"
#include "sgkit/rng.hpp"
#include "bench_util.hpp"

namespace {

void BM_ParseRecord(benchmark::State& state) {
  std::string text = sgkit::bench::sample_record_text(3);
  for (auto _ : state) {
    auto rec = sgkit::parse_record(text);
    benchmark::DoNotOptimize(rec);
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_ParseRecord);

void BM_SerializeRecord(benchmark::State& state) {
  auto rec = sgkit::parse_record(sgkit::bench::sample_record_text(7));
  for (auto _ : state) {
    std::string bytes = sgkit::serialize_record(rec.value());
    benchmark::DoNotOptimize(bytes);
  }
}
BENCHMARK(BM_SerializeRecord);

void BM_StreamRecords(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::ostringstream corpus;
  sgkit::SplitMix64 rng{11};
  for (int i = 0; i < n; ++i) {
    corpus << sgkit::bench::sample_record_text(rng.next()) << "\n";
  }
  std::string text = corpus.str();
  for (auto _ : state) {
    std::istringstream in(text);
    std::uint64_t seen = 0;
    sgkit::IngestStats stats =
        sgkit::stream_records(in, [&](sgkit::DatasetRecord&& rec) { seen += rec.img_id.size(); });
    benchmark::DoNotOptimize(stats);
    benchmark::DoNotOptimize(seen);
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_StreamRecords)->Arg(100)->Arg(1000)->Arg(10000);

void BM_SplitDataset(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back("img" + std::to_string(i));
  sgkit::SplitSpec spec{n / 2, n / 4, n / 4, 99};
  for (auto _ : state) {
    auto result = sgkit::split_dataset(ids, spec);
    benchmark::DoNotOptimize(result);
  }
}
BENCHMARK(BM_SplitDataset)->Arg(10000)->Arg(100000);

void BM_Validate(benchmark::State& state) {
  auto rec = sgkit::parse_record(sgkit::bench::sample_record_text(23));
  for (auto _ : state) {
    auto report = sgkit::validate(rec.value(), sgkit::ValidationMode::strict);
    benchmark::DoNotOptimize(report);
  }
}
BENCHMARK(BM_Validate);

}  // namespace

BENCHMARK_MAIN();
