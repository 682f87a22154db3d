#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>

#include "sgkit/eval.hpp"
#include "sgkit/io.hpp"
#include "test_helpers.hpp"

#ifndef SGKIT_CLI_PATH
#error "SGKIT_CLI_PATH must point at the sgkit binary"
#endif

using namespace sgkit;

namespace {

int run_cli(const std::string& args, const std::string& workdir) {
  std::string command = "cd " + workdir + " && " + SGKIT_CLI_PATH + " " + args +
                        " >cli_stdout.txt 2>cli_stderr.txt";
  int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string make_corpus(const test::TempDir& dir, const std::string& name, int n,
                        std::uint64_t seed) {
  SplitMix64 rng{seed};
  std::ostringstream out;
  for (int i = 0; i < n; ++i) {
    out << serialize_record(test::make_random_record(rng, static_cast<std::size_t>(i))) << "\n";
  }
  std::string path = dir.file(name);
  test::write_file(path, out.str());
  return path;
}

}  // namespace

TEST_CASE("validate: exit 0 on a clean corpus, 1 on domain errors, 2 on missing input") {
  test::TempDir dir("cli-validate");
  std::string corpus = make_corpus(dir, "corpus.jsonl", 10, 1);
  CHECK(run_cli("validate corpus.jsonl", dir.path().string()) == 0);

  // plant a dangling reference
  std::vector<DatasetRecord> records = load_records(corpus);
  records[3].graph.relations.push_back({99, 0, "refers to", 12345, std::nullopt, {}});
  std::ostringstream out;
  for (const DatasetRecord& r : records) out << serialize_record(r) << "\n";
  test::write_file(dir.file("broken.jsonl"), out.str());
  CHECK(run_cli("--out report.txt validate broken.jsonl", dir.path().string()) == 1);
  std::string report = test::read_file(dir.file("report.txt"));
  CHECK(report.find(records[3].img_id) != std::string::npos);
  CHECK(report.find("dangling-ref") != std::string::npos);

  CHECK(run_cli("validate does_not_exist.jsonl", dir.path().string()) == 2);
}

TEST_CASE("split twice with the same seed produces byte-identical files") {
  test::TempDir dir("cli-split");
  make_corpus(dir, "corpus.jsonl", 50, 2);
  std::string args = "--seed 11 split corpus.jsonl --train 30 --val 10 --test 10 "
                     "--out-prefix run1";
  CHECK(run_cli(args, dir.path().string()) == 0);
  std::string args2 = "--seed 11 split corpus.jsonl --train 30 --val 10 --test 10 "
                      "--out-prefix run2";
  CHECK(run_cli(args2, dir.path().string()) == 0);
  for (const char* part : {"train", "val", "test"}) {
    std::string a = test::read_file(dir.file(std::string("run1.") + part + ".txt"));
    std::string b = test::read_file(dir.file(std::string("run2.") + part + ".txt"));
    CHECK(a == b);
  }
  // run manifest exists and carries the seed
  std::string manifest = test::read_file(dir.file("run1.train.txt.run.json"));
  CHECK(manifest.find("\"seed\": \"11\"") != std::string::npos);

  CHECK(run_cli("split corpus.jsonl --train 49 --val 1 --test 9 --out-prefix over",
                dir.path().string()) == 1);
}

TEST_CASE("split --apply-lists partitions the corpus by id") {
  test::TempDir dir("cli-apply");
  std::string corpus = make_corpus(dir, "corpus.jsonl", 9, 3);
  std::vector<DatasetRecord> records = load_records(corpus);
  std::vector<std::string> train, val, test_ids;
  for (std::size_t i = 0; i < records.size(); ++i) {
    (i < 5 ? train : i < 7 ? val : test_ids).push_back(records[i].img_id);
  }
  write_id_list(dir.file("train.txt"), train);
  write_id_list(dir.file("val.txt"), val);
  write_id_list(dir.file("test.txt"), test_ids);
  CHECK(run_cli("split corpus.jsonl --apply-lists train.txt --apply-lists val.txt "
                "--apply-lists test.txt --out-prefix part",
                dir.path().string()) == 0);
  CHECK(load_records(dir.file("part.train.jsonl")).size() == 5);
  CHECK(load_records(dir.file("part.val.jsonl")).size() == 2);
  CHECK(load_records(dir.file("part.test.jsonl")).size() == 2);
}

TEST_CASE("bench writes a manifest matching a brute-force filter") {
  test::TempDir dir("cli-bench");
  std::string corpus = make_corpus(dir, "corpus.jsonl", 60, 4);
  CHECK(run_cli("--out bench.txt bench corpus.jsonl --threshold 4 --split-name unit",
                dir.path().string()) == 0);
  BenchManifest manifest = read_bench_manifest(dir.file("bench.txt"));
  CHECK(manifest.threshold == 4);
  CHECK(manifest.source_split == "unit");

  std::vector<std::string> oracle;
  for (const DatasetRecord& r : load_records(corpus)) {
    if (r.graph.relations.size() > 4) oracle.push_back(r.img_id);
  }
  CHECK(manifest.img_ids == oracle);
}

TEST_CASE("metrics against itself is all ones") {
  test::TempDir dir("cli-metrics");
  make_corpus(dir, "corpus.jsonl", 8, 5);
  CHECK(run_cli("--out m.tsv metrics --pred corpus.jsonl --ref corpus.jsonl",
                dir.path().string()) == 0);
  std::string table = test::read_file(dir.file("m.tsv"));
  CHECK(table.find("AGGREGATE\t1.000000\t1.000000\t1.000000") != std::string::npos);
}

TEST_CASE("stats honors --bins and writes the JSON report") {
  test::TempDir dir("cli-stats");
  make_corpus(dir, "corpus.jsonl", 20, 6);
  CHECK(run_cli("--out s.json stats corpus.jsonl --bins object=2,4 --bins sg=5,15 --top-k 3",
                dir.path().string()) == 0);
  std::string json = test::read_file(dir.file("s.json"));
  CHECK(json.find("\"[2,4)\"") != std::string::npos);
  CHECK(json.find("\"[5,15)\"") != std::string::npos);
  CHECK(json.find("\"n_records\": 20") != std::string::npos);

  // reproducibility: same inputs, identical bytes
  CHECK(run_cli("--out s2.json stats corpus.jsonl --bins object=2,4 --bins sg=5,15 --top-k 3",
                dir.path().string()) == 0);
  CHECK(test::read_file(dir.file("s2.json")) == json);
}

TEST_CASE("encode emits a matrix with a provenance sidecar, reproducibly") {
  test::TempDir dir("cli-encode");
  test::write_file(dir.file("graph.json"), test::read_file(test::data_path("record_483868.json")));
  CHECK(run_cli("--out emb.txt encode graph.json --dim 16 --embed-seed 5",
                dir.path().string()) == 0);
  std::string matrix = test::read_file(dir.file("emb.txt"));
  std::string prov = test::read_file(dir.file("emb.txt.prov"));
  CHECK(prov == "t0\n");
  CHECK(std::count(matrix.begin(), matrix.end(), '\n') == 1);

  CHECK(run_cli("--out emb2.txt encode graph.json --dim 16 --embed-seed 5",
                dir.path().string()) == 0);
  CHECK(test::read_file(dir.file("emb2.txt")) == matrix);
}

TEST_CASE("audit emits bundle and tally, and reads rates back") {
  test::TempDir dir("cli-audit");
  make_corpus(dir, "corpus.jsonl", 30, 7);
  CHECK(run_cli("--seed 9 audit corpus.jsonl --n 10 --out-prefix aud", dir.path().string()) == 0);
  std::string tally = test::read_file(dir.file("aud.tally.tsv"));
  CHECK(std::count(tally.begin(), tally.end(), '\n') == 11);  // header + 10

  // fill in one hallucination mark and read the rates back
  std::string filled = "img_id\thallucination\tmislabel\tnotes\n";
  int row = 0;
  std::istringstream lines(tally);
  std::string line;
  std::getline(lines, line);  // skip header
  while (std::getline(lines, line)) {
    std::string id = line.substr(0, line.find('\t'));
    filled += id + "\t" + (row == 0 ? "1" : "0") + "\t0\tok\n";
    ++row;
  }
  test::write_file(dir.file("filled.tsv"), filled);
  CHECK(run_cli("audit --rates filled.tsv", dir.path().string()) == 0);
  std::string stdout_text = test::read_file(dir.file("cli_stdout.txt"));
  CHECK(stdout_text.find("hallucinations: 1 (10%)") != std::string::npos);
}

TEST_CASE("usage errors exit with 2") {
  test::TempDir dir("cli-usage");
  CHECK(run_cli("frobnicate", dir.path().string()) != 0);
  CHECK(run_cli("encode missing.json --out x.txt", dir.path().string()) == 2);
  make_corpus(dir, "corpus.jsonl", 3, 8);
  CHECK(run_cli("bench corpus.jsonl", dir.path().string()) == 2);  // no --out
}
