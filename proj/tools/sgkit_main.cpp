// sgkit: command-line driver for the scene-graph dataset toolkit.
//
// Subcommands: validate, stats, annotate, bench, metrics, split, encode,
// audit. Exit codes: 0 success, 1 domain errors present, 2 usage or I/O
// failure. Offline subcommands are bit-reproducible for identical inputs,
// flags and seeds; every run writes a <out>.run.json manifest with the
// resolved configuration and input digests.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <unordered_map>
#include <unordered_set>

#include "CLI11.hpp"
#include "json.hpp"
#include "sgkit/annotate.hpp"
#include "sgkit/config.hpp"
#include "sgkit/digest.hpp"
#include "sgkit/encoder.hpp"
#include "sgkit/eval.hpp"
#include "sgkit/io.hpp"
#include "sgkit/model.hpp"
#include "sgkit/stats.hpp"
#include "sgkit/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomainErrors = 1;
constexpr int kExitUsage = 2;

struct RunContext {
  std::string subcommand;
  std::map<std::string, std::string> options;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  void opt(const std::string& key, const std::string& value) { options[key] = value; }
  void opt(const std::string& key, std::uint64_t value) {
    options[key] = std::to_string(value);
  }
};

// The manifest intentionally has no timestamp: identical runs must produce
// identical bytes.
void write_run_manifest(const RunContext& ctx) {
  if (ctx.outputs.empty()) return;
  nlohmann::ordered_json j;
  j["tool"] = "sgkit";
  j["version"] = sgkit::kVersion;
  j["subcommand"] = ctx.subcommand;
  j["options"] = ctx.options;
  nlohmann::ordered_json inputs;
  for (const std::string& path : ctx.inputs) {
    inputs[path] = sgkit::file_digest_hex(path);
  }
  j["inputs"] = inputs;
  j["outputs"] = ctx.outputs;
  std::string path = ctx.outputs.front() + ".run.json";
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << "\n";
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failure: " + path);
}

std::vector<std::string> collect_corpus_ids(const std::string& path) {
  // record container -> img_ids; anything else -> id list file
  if (path.ends_with(".jsonl") || path.ends_with(".json")) {
    std::vector<std::string> ids;
    sgkit::IngestStats stats = sgkit::stream_records_file(
        path, [&](sgkit::DatasetRecord&& rec) { ids.push_back(std::move(rec.img_id)); });
    if (stats.io_failed) throw std::runtime_error(stats.io_error);
    return ids;
  }
  return sgkit::read_id_list(path);
}

sgkit::EndpointConfig endpoint_from_config(const sgkit::KvConfig& config,
                                           const std::string& url_key,
                                           const std::string& model_key) {
  sgkit::EndpointConfig endpoint;
  endpoint.url = config.get(url_key);
  endpoint.model = config.get(model_key, config.get("model"));
  endpoint.api_key_env = config.get("api_key_env");
  endpoint.temperature = config.get_double("temperature", 0.0);
  endpoint.timeout_sec = static_cast<int>(config.get_int("timeout_sec", 120));
  return endpoint;
}

// ---------------------------------------------------------------------------

int run_validate(const std::string& corpus, bool strict, const std::string& out_path) {
  const sgkit::ValidationMode mode =
      strict ? sgkit::ValidationMode::strict : sgkit::ValidationMode::lenient;
  std::uint64_t error_records = 0;
  std::uint64_t warning_records = 0;
  std::uint64_t total_errors = 0;
  std::uint64_t total_warnings = 0;
  std::ostringstream report;

  sgkit::IngestStats stats = sgkit::stream_records_file(
      corpus,
      [&](sgkit::DatasetRecord&& rec) {
        sgkit::ValidationReport vr = sgkit::validate(rec, mode);
        if (!vr.errors.empty()) ++error_records;
        if (!vr.warnings.empty()) ++warning_records;
        total_errors += vr.errors.size();
        total_warnings += vr.warnings.size();
        for (const sgkit::ValidationIssue& issue : vr.errors) {
          report << rec.img_id << "\tERROR\t" << issue.rule << "\t" << issue.location << "\t"
                 << issue.message << "\n";
        }
        for (const sgkit::ValidationIssue& issue : vr.warnings) {
          report << rec.img_id << "\tWARN\t" << issue.rule << "\t" << issue.location << "\t"
                 << issue.message << "\n";
        }
      },
      [&](const sgkit::ParseError& err) {
        report << "<parse>\tERROR\t" << err.code << "\t@" << err.byte_offset << "\t"
               << err.message << "\n";
      });
  if (stats.io_failed) {
    std::cerr << "sgkit validate: " << stats.io_error << "\n";
    return kExitUsage;
  }

  std::ostringstream summary;
  summary << "records: " << stats.records_seen() << "\nparsed: " << stats.records_ok
          << "\nparse_failures: " << stats.records_failed << "\nrecords_with_errors: "
          << error_records << "\nrecords_with_warnings: " << warning_records
          << "\nerrors: " << total_errors << "\nwarnings: " << total_warnings << "\n";
  std::cout << summary.str();
  if (!out_path.empty()) {
    write_text_file(out_path, summary.str() + "---\n" + report.str());
  }
  const bool clean = stats.records_failed == 0 && total_errors == 0;
  return clean ? kExitOk : kExitDomainErrors;
}

int run_stats(const std::string& corpus, const sgkit::StatsConfig& config,
              const std::string& out_path, bool print_table) {
  sgkit::StatsAccumulator acc(config);
  sgkit::IngestStats stats = sgkit::stream_records_file(
      corpus, [&](sgkit::DatasetRecord&& rec) { acc.add(rec); });
  if (stats.io_failed) {
    std::cerr << "sgkit stats: " << stats.io_error << "\n";
    return kExitUsage;
  }
  if (acc.n_records() == 0) {
    std::cerr << "sgkit stats: empty corpus\n";
    return kExitDomainErrors;
  }
  sgkit::StatsReport report = acc.report();
  if (print_table) std::cout << sgkit::stats_table_text(report);
  if (!out_path.empty()) write_text_file(out_path, sgkit::stats_json_text(report) + "\n");
  return stats.records_failed == 0 ? kExitOk : kExitDomainErrors;
}

int run_annotate(const std::string& manifest_path, const sgkit::KvConfig& config,
                 const std::string& journal_path, const std::string& out_path, int parallelism,
                 bool include_caption) {
  auto jobs = sgkit::read_job_manifest(manifest_path);
  if (!jobs.ok()) {
    std::cerr << "sgkit annotate: " << jobs.error().message << "\n";
    return kExitUsage;
  }
  sgkit::EndpointConfig endpoint = endpoint_from_config(config, "endpoint_url", "model");
  if (endpoint.url.empty()) {
    std::cerr << "sgkit annotate: config lacks endpoint_url\n";
    return kExitUsage;
  }
  auto client = sgkit::make_http_chat_client(endpoint);

  sgkit::PromptConfig prompt = sgkit::default_prompt_config();
  prompt.model_name = endpoint.model;
  prompt.temperature = endpoint.temperature;
  prompt.include_caption = include_caption;

  sgkit::PipelineOptions options;
  options.parallelism = parallelism > 0
                            ? parallelism
                            : static_cast<int>(config.get_int("parallelism", 4));
  options.max_retries = static_cast<int>(config.get_int("max_retries", 3));
  options.backoff_initial = std::chrono::milliseconds(config.get_int("backoff_ms", 1000));

  sgkit::PipelineResult result = sgkit::run_pipeline(std::move(jobs.value()), prompt, *client,
                                                     options, journal_path, out_path);
  std::cout << "done: " << result.done << "\nskipped: " << result.skipped
            << "\nfailed: " << result.failed << "\nrequests: " << result.requests << "\n";
  return result.failed == 0 ? kExitOk : kExitDomainErrors;
}

int run_bench(const std::string& corpus, std::uint64_t threshold, const std::string& split_name,
              const std::string& out_path) {
  sgkit::BenchManifest manifest;
  manifest.threshold = threshold;
  manifest.source_split = split_name;
  sgkit::IngestStats stats = sgkit::stream_records_file(corpus, [&](sgkit::DatasetRecord&& rec) {
    ++manifest.scanned;
    if (rec.graph.relations.size() > threshold) manifest.img_ids.push_back(rec.img_id);
  });
  if (stats.io_failed) {
    std::cerr << "sgkit bench: " << stats.io_error << "\n";
    return kExitUsage;
  }
  sgkit::write_bench_manifest(out_path, manifest);
  std::cout << "scanned: " << manifest.scanned << "\nselected: " << manifest.img_ids.size()
            << "\n";
  return stats.records_failed == 0 ? kExitOk : kExitDomainErrors;
}

int run_metrics(const std::string& pred_path, const std::string& ref_path,
                const std::string& out_path) {
  std::unordered_map<std::string, sgkit::SceneGraph> reference;
  sgkit::IngestStats ref_stats = sgkit::stream_records_file(
      ref_path,
      [&](sgkit::DatasetRecord&& rec) { reference.emplace(rec.img_id, std::move(rec.graph)); });
  if (ref_stats.io_failed) {
    std::cerr << "sgkit metrics: " << ref_stats.io_error << "\n";
    return kExitUsage;
  }

  std::ostringstream table;
  table << "img_id\tsg_iou\tentity_iou\trelation_iou\n";
  double sg = 0, entity = 0, relation = 0;
  std::uint64_t scored = 0, unmatched = 0, errored = 0;
  sgkit::IngestStats pred_stats = sgkit::stream_records_file(
      pred_path, [&](sgkit::DatasetRecord&& rec) {
        auto ref = reference.find(rec.img_id);
        if (ref == reference.end()) {
          ++unmatched;
          return;
        }
        auto report = sgkit::iou_report(rec.graph, ref->second);
        if (!report.ok()) {
          ++errored;
          return;
        }
        ++scored;
        sg += report->sg_iou;
        entity += report->entity_iou;
        relation += report->relation_iou;
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s\t%.6f\t%.6f\t%.6f\n", rec.img_id.c_str(),
                      report->sg_iou, report->entity_iou, report->relation_iou);
        table << buf;
      });
  if (pred_stats.io_failed) {
    std::cerr << "sgkit metrics: " << pred_stats.io_error << "\n";
    return kExitUsage;
  }
  if (scored > 0) {
    char buf[128];
    double n = static_cast<double>(scored);
    std::snprintf(buf, sizeof(buf), "AGGREGATE\t%.6f\t%.6f\t%.6f\n", sg / n, entity / n,
                  relation / n);
    table << buf;
  }
  std::cout << table.str();
  if (!out_path.empty()) write_text_file(out_path, table.str());
  std::cerr << "scored: " << scored << " unmatched: " << unmatched << " errored: " << errored
            << "\n";
  return (scored > 0 && errored == 0) ? kExitOk : kExitDomainErrors;
}

int run_split(const std::string& input, const sgkit::SplitSpec& spec,
              const std::string& out_prefix, RunContext& ctx) {
  std::vector<std::string> ids = collect_corpus_ids(input);
  auto result = sgkit::split_dataset(ids, spec);
  if (!result.ok()) {
    std::cerr << "sgkit split: " << result.error().message << "\n";
    return kExitDomainErrors;
  }
  const std::string train = out_prefix + ".train.txt";
  const std::string val = out_prefix + ".val.txt";
  const std::string test = out_prefix + ".test.txt";
  sgkit::write_id_list(train, result->train);
  sgkit::write_id_list(val, result->val);
  sgkit::write_id_list(test, result->test);
  ctx.outputs = {train, val, test};
  std::cout << "train: " << result->train.size() << "\nval: " << result->val.size()
            << "\ntest: " << result->test.size() << "\n";
  return kExitOk;
}

// Partition a corpus into per-split record files using externally provided
// id lists (for published splits rather than the seeded shuffle).
int run_split_apply(const std::string& corpus, const std::vector<std::string>& list_paths,
                    const std::string& out_prefix, RunContext& ctx) {
  const char* names[3] = {"train", "val", "test"};
  std::unordered_map<std::string, int> assignment;
  for (int part = 0; part < 3; ++part) {
    for (const std::string& id : sgkit::read_id_list(list_paths[static_cast<std::size_t>(part)])) {
      assignment[id] = part;
    }
  }
  std::ofstream outs[3];
  for (int part = 0; part < 3; ++part) {
    std::string path = out_prefix + "." + names[part] + ".jsonl";
    outs[part].open(path, std::ios::binary);
    if (!outs[part]) throw std::runtime_error("cannot open for writing: " + path);
    ctx.outputs.push_back(path);
  }
  std::uint64_t assigned = 0, unassigned = 0;
  sgkit::IngestStats stats = sgkit::stream_records_file(corpus, [&](sgkit::DatasetRecord&& rec) {
    auto it = assignment.find(rec.img_id);
    if (it == assignment.end()) {
      ++unassigned;
      return;
    }
    outs[it->second] << sgkit::serialize_record(rec) << '\n';
    ++assigned;
  });
  if (stats.io_failed) {
    std::cerr << "sgkit split: " << stats.io_error << "\n";
    return kExitUsage;
  }
  std::cout << "assigned: " << assigned << "\nunassigned: " << unassigned << "\n";
  return kExitOk;
}

int run_encode(const std::string& input, const std::string& params_path, std::size_t dim,
               std::size_t hidden, std::size_t layers, std::uint64_t embed_seed,
               const sgkit::KvConfig& config, const std::string& out_path, RunContext& ctx) {
  std::ifstream in(input, std::ios::binary);
  if (!in) {
    std::cerr << "sgkit encode: cannot open " << input << "\n";
    return kExitUsage;
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();

  sgkit::SceneGraph graph;
  auto rec = sgkit::parse_record(text);
  if (rec.ok()) {
    graph = std::move(rec->graph);
  } else {
    auto bare = sgkit::parse_graph(text);
    if (!bare.ok()) {
      std::cerr << "sgkit encode: input is neither a record nor a graph: "
                << bare.error().message << "\n";
      return kExitDomainErrors;
    }
    graph = std::move(bare.value());
  }

  sgkit::EncoderParams params;
  if (!params_path.empty()) {
    auto loaded = sgkit::load_params(params_path);
    if (!loaded.ok()) {
      std::cerr << "sgkit encode: " << loaded.error().message << "\n";
      return kExitDomainErrors;
    }
    params = std::move(loaded.value());
  } else {
    params = sgkit::EncoderParams::zeros(dim, hidden, layers);
  }

  std::unique_ptr<sgkit::EmbeddingBackend> backend;
  if (config.has("embed_url")) {
    backend = sgkit::make_http_embedding_backend(
        endpoint_from_config(config, "embed_url", "embed_model"), params.dim);
  } else {
    backend = std::make_unique<sgkit::HashEmbeddingBackend>(params.dim, embed_seed);
  }

  auto embedding = sgkit::assemble(graph, *backend, params);
  if (!embedding.ok()) {
    std::cerr << "sgkit encode: " << embedding.error().message << "\n";
    return kExitDomainErrors;
  }
  write_text_file(out_path, sgkit::embedding_matrix_text(*embedding));
  const std::string prov_path = out_path + ".prov";
  write_text_file(prov_path, sgkit::embedding_provenance_text(*embedding));
  ctx.outputs = {out_path, prov_path};
  std::cout << "vectors: " << embedding->vectors.size() << "\ntriples: " << embedding->n_triples
            << "\ndim: " << params.dim << "\n";
  return kExitOk;
}

int run_audit(const std::string& corpus, std::uint64_t n, std::uint64_t seed,
              const std::string& out_prefix, const std::string& rates_path, RunContext& ctx) {
  if (!rates_path.empty()) {
    std::ifstream in(rates_path, std::ios::binary);
    if (!in) {
      std::cerr << "sgkit audit: cannot open " << rates_path << "\n";
      return kExitUsage;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    auto rates = sgkit::audit_rates_from_tally(buf.str());
    if (!rates.ok()) {
      std::cerr << "sgkit audit: " << rates.error().message << "\n";
      return kExitDomainErrors;
    }
    std::cout << "reviewed: " << rates->reviewed
              << "\nhallucinations: " << rates->hallucinations << " ("
              << rates->hallucination_rate_percent << "%)"
              << "\nmislabels: " << rates->mislabels << " (" << rates->mislabel_rate_percent
              << "%)\n";
    return kExitOk;
  }

  std::vector<sgkit::DatasetRecord> records;
  sgkit::IngestStats stats = sgkit::stream_records_file(
      corpus, [&](sgkit::DatasetRecord&& rec) { records.push_back(std::move(rec)); });
  if (stats.io_failed) {
    std::cerr << "sgkit audit: " << stats.io_error << "\n";
    return kExitUsage;
  }
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const sgkit::DatasetRecord& rec : records) ids.push_back(rec.img_id);
  auto sample = sgkit::sample_audit(ids, n, seed);
  if (!sample.ok()) {
    std::cerr << "sgkit audit: " << sample.error().message << "\n";
    return kExitDomainErrors;
  }
  const std::string bundle_path = out_prefix + ".bundle.md";
  const std::string tally_path = out_prefix + ".tally.tsv";
  write_text_file(bundle_path, sgkit::render_audit_bundle(records, *sample));
  write_text_file(tally_path, sgkit::render_audit_tally_template(*sample));
  ctx.outputs = {bundle_path, tally_path};
  std::cout << "sampled: " << sample->img_ids.size() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scene-graph dataset toolkit"};
  app.set_version_flag("--version", std::string("sgkit ") + sgkit::kVersion);
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  std::uint64_t seed = 0;
  bool strict = false;
  bool lenient = false;
  std::string out;
  app.add_option("--config", config_path, "flat key=value config file")->expected(1);
  app.add_option("--seed", seed, "seed for seeded subcommands");
  app.add_flag("--strict", strict, "strict validation mode");
  app.add_flag("--lenient", lenient, "lenient validation mode (default)");
  app.add_option("--out", out, "output file (subcommand-specific)");

  // validate
  auto* validate_cmd = app.add_subcommand("validate", "validate a record corpus");
  std::string validate_corpus;
  validate_cmd->add_option("corpus", validate_corpus, "record container (.jsonl/.json)")
      ->required();

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "corpus statistics report");
  std::string stats_corpus;
  std::vector<std::string> bins;
  std::size_t top_k = 10;
  bool no_table = false;
  stats_cmd->add_option("corpus", stats_corpus)->required();
  stats_cmd->add_option("--bins", bins,
                        "histogram edges, e.g. --bins object=5,10,20 --bins sg=10,20,30");
  stats_cmd->add_option("--top-k", top_k, "top-k term table size");
  stats_cmd->add_flag("--no-table", no_table, "suppress the stdout table");

  // annotate
  auto* annotate_cmd = app.add_subcommand("annotate", "run the annotation pipeline");
  std::string manifest_path, journal_path;
  int parallelism = 0;
  bool include_caption = false;
  annotate_cmd->add_option("--manifest", manifest_path, "jobs manifest (.jsonl)")->required();
  annotate_cmd->add_option("--journal", journal_path, "append-only journal file")->required();
  annotate_cmd->add_option("--parallelism", parallelism, "max in-flight requests");
  annotate_cmd->add_flag("--include-caption", include_caption,
                         "attach the source caption to each request");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "complex-scene benchmark manifest");
  std::string bench_corpus, split_name;
  std::uint64_t threshold = 4;
  bench_cmd->add_option("corpus", bench_corpus)->required();
  bench_cmd->add_option("--threshold", threshold, "select records with more relations than this");
  bench_cmd->add_option("--split-name", split_name, "label recorded in the manifest header");

  // metrics
  auto* metrics_cmd = app.add_subcommand("metrics", "IoU consistency metrics");
  std::string pred_path, ref_path;
  metrics_cmd->add_option("--pred", pred_path, "predicted records")->required();
  metrics_cmd->add_option("--ref", ref_path, "reference records")->required();

  // split
  auto* split_cmd = app.add_subcommand("split", "deterministic dataset split");
  std::string split_input, out_prefix;
  std::uint64_t train_count = 0, val_count = 0, test_count = 0;
  std::vector<std::string> apply_lists;
  split_cmd->add_option("input", split_input, "record container or id-list file")->required();
  split_cmd->add_option("--train", train_count);
  split_cmd->add_option("--val", val_count);
  split_cmd->add_option("--test", test_count);
  split_cmd->add_option("--out-prefix", out_prefix, "prefix for the emitted files")->required();
  split_cmd->add_option("--apply-lists", apply_lists,
                        "three id-list files (train,val,test): partition the corpus instead "
                        "of shuffling");

  // encode
  auto* encode_cmd = app.add_subcommand("encode", "assemble a conditioning embedding");
  std::string encode_input, params_path;
  std::size_t dim = 512, hidden = 512, layers = 5;
  std::uint64_t embed_seed = 0;
  encode_cmd->add_option("input", encode_input, "record or graph JSON file")->required();
  encode_cmd->add_option("--params", params_path, "encoder checkpoint");
  encode_cmd->add_option("--dim", dim, "embedding width (fresh params)");
  encode_cmd->add_option("--hidden", hidden, "message width (fresh params)");
  encode_cmd->add_option("--layers", layers, "rounds of message passing (fresh params)");
  encode_cmd->add_option("--embed-seed", embed_seed, "hash embedding backend seed");

  // audit
  auto* audit_cmd = app.add_subcommand("audit", "reproducible annotation audit sample");
  std::string audit_corpus, audit_prefix, rates_path;
  std::uint64_t audit_n = 100;
  audit_cmd->add_option("corpus", audit_corpus);
  audit_cmd->add_option("--n", audit_n, "sample size");
  audit_cmd->add_option("--out-prefix", audit_prefix, "prefix for bundle and tally files");
  audit_cmd->add_option("--rates", rates_path, "compute rates from a filled tally sheet");

  CLI11_PARSE(app, argc, argv);

  sgkit::KvConfig config;
  if (!config_path.empty()) {
    auto loaded = sgkit::KvConfig::load(config_path);
    if (!loaded.ok()) {
      std::cerr << "sgkit: " << loaded.error().message << "\n";
      return kExitUsage;
    }
    config = std::move(loaded.value());
  }

  RunContext ctx;
  ctx.opt("seed", seed);
  if (strict) ctx.opt("mode", "strict");

  try {
    if (validate_cmd->parsed()) {
      ctx.subcommand = "validate";
      ctx.inputs = {validate_corpus};
      ctx.opt("corpus", validate_corpus);
      if (!out.empty()) ctx.outputs = {out};
      int code = run_validate(validate_corpus, strict, out);
      write_run_manifest(ctx);
      return code;
    }
    if (stats_cmd->parsed()) {
      ctx.subcommand = "stats";
      ctx.inputs = {stats_corpus};
      ctx.opt("corpus", stats_corpus);
      ctx.opt("top_k", static_cast<std::uint64_t>(top_k));
      sgkit::StatsConfig stats_config;
      stats_config.top_k = top_k;
      for (const std::string& spec : bins) {
        std::size_t eq = spec.find('=');
        if (eq == std::string::npos) {
          std::cerr << "sgkit stats: --bins expects kind=e1,e2,...\n";
          return kExitUsage;
        }
        std::string kind = spec.substr(0, eq);
        sgkit::HistEdges edges;
        std::istringstream list(spec.substr(eq + 1));
        std::string item;
        while (std::getline(list, item, ',')) {
          edges.push_back(std::strtoull(item.c_str(), nullptr, 10));
        }
        if (kind == "object") {
          stats_config.object_word_edges = edges;
        } else if (kind == "sg") {
          stats_config.sg_word_edges = edges;
        } else {
          std::cerr << "sgkit stats: unknown --bins kind '" << kind << "'\n";
          return kExitUsage;
        }
        ctx.opt("bins." + kind, spec.substr(eq + 1));
      }
      if (!out.empty()) ctx.outputs = {out};
      int code = run_stats(stats_corpus, stats_config, out, !no_table);
      write_run_manifest(ctx);
      return code;
    }
    if (annotate_cmd->parsed()) {
      ctx.subcommand = "annotate";
      if (out.empty()) {
        std::cerr << "sgkit annotate: --out is required (records output)\n";
        return kExitUsage;
      }
      ctx.inputs = {manifest_path};
      ctx.outputs = {out, journal_path};
      int code = run_annotate(manifest_path, config, journal_path, out, parallelism,
                              include_caption);
      write_run_manifest(ctx);
      return code;
    }
    if (bench_cmd->parsed()) {
      ctx.subcommand = "bench";
      if (out.empty()) {
        std::cerr << "sgkit bench: --out is required\n";
        return kExitUsage;
      }
      ctx.inputs = {bench_corpus};
      ctx.opt("threshold", threshold);
      ctx.outputs = {out};
      int code = run_bench(bench_corpus, threshold, split_name, out);
      write_run_manifest(ctx);
      return code;
    }
    if (metrics_cmd->parsed()) {
      ctx.subcommand = "metrics";
      ctx.inputs = {pred_path, ref_path};
      if (!out.empty()) ctx.outputs = {out};
      int code = run_metrics(pred_path, ref_path, out);
      write_run_manifest(ctx);
      return code;
    }
    if (split_cmd->parsed()) {
      ctx.subcommand = "split";
      ctx.inputs = {split_input};
      if (!apply_lists.empty()) {
        if (apply_lists.size() != 3) {
          std::cerr << "sgkit split: --apply-lists needs exactly three files\n";
          return kExitUsage;
        }
        for (const std::string& p : apply_lists) ctx.inputs.push_back(p);
        int code = run_split_apply(split_input, apply_lists, out_prefix, ctx);
        write_run_manifest(ctx);
        return code;
      }
      sgkit::SplitSpec spec{train_count, val_count, test_count, seed};
      ctx.opt("train", train_count);
      ctx.opt("val", val_count);
      ctx.opt("test", test_count);
      int code = run_split(split_input, spec, out_prefix, ctx);
      write_run_manifest(ctx);
      return code;
    }
    if (encode_cmd->parsed()) {
      ctx.subcommand = "encode";
      if (out.empty()) {
        std::cerr << "sgkit encode: --out is required\n";
        return kExitUsage;
      }
      ctx.inputs = {encode_input};
      if (!params_path.empty()) ctx.inputs.push_back(params_path);
      ctx.opt("dim", static_cast<std::uint64_t>(dim));
      ctx.opt("embed_seed", embed_seed);
      int code = run_encode(encode_input, params_path, dim, hidden, layers, embed_seed, config,
                            out, ctx);
      write_run_manifest(ctx);
      return code;
    }
    if (audit_cmd->parsed()) {
      ctx.subcommand = "audit";
      if (rates_path.empty() && (audit_corpus.empty() || audit_prefix.empty())) {
        std::cerr << "sgkit audit: need a corpus and --out-prefix, or --rates\n";
        return kExitUsage;
      }
      if (!audit_corpus.empty()) ctx.inputs = {audit_corpus};
      ctx.opt("n", audit_n);
      int code = run_audit(audit_corpus, audit_n, seed, audit_prefix, rates_path, ctx);
      write_run_manifest(ctx);
      return code;
    }
  } catch (const std::exception& e) {
    std::cerr << "sgkit: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
