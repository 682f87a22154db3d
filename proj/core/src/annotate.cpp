#include "sgkit/annotate.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "json.hpp"
#include "sgkit/rng.hpp"

namespace sgkit {

PromptConfig default_prompt_config() {
  PromptConfig config;
  config.coverage_text =
      "Perform identification of as many objects, attributes, and their relations "
      "within the image as possible.";
  config.rule_texts = {
      "Identify the objects in the image and assign a unique ID to each, even when "
      "multiple objects are of the same type.",
      "The attributes must be abstract adjectives and should not include specific "
      "objects. Each object must have at least one abstract adjective attribute.",
      "The relations between objects should be as specific as possible, avoiding "
      "simple relations. Use more precise verbs, minimizing repetition.",
      "For people, label the object as \"person\" and include attributes such as "
      "gender and age. Avoid anthropomorphism or associations, and provide an "
      "objective description of what is observed in the image.",
  };
  config.output_format_instructions =
      "Respond with a single JSON object and nothing else. It must contain two "
      "arrays: \"items\" and \"relations\". Each item is an object with fields "
      "item_id (integer, unique), label (lowercase common noun), attributes "
      "(array of strings). Each relation is an object with fields triple_id "
      "(integer, unique), item1 (subject item_id), relation (verb phrase), "
      "item2 (object item_id).";
  return config;
}

std::string build_prompt(const PromptConfig& config) {
  PromptConfig defaults = default_prompt_config();
  std::string coverage = config.coverage_text.empty() ? defaults.coverage_text
                                                      : config.coverage_text;
  const std::vector<std::string>& rules =
      config.rule_texts.empty() ? defaults.rule_texts : config.rule_texts;
  std::string format = config.output_format_instructions.empty()
                           ? defaults.output_format_instructions
                           : config.output_format_instructions;

  std::ostringstream out;
  out << coverage << "\n\n";
  for (std::size_t i = 0; i < rules.size(); ++i) {
    out << (i + 1) << ". " << rules[i] << "\n";
  }
  out << "\n" << format;
  return out.str();
}

namespace {

// Balanced {...} slice starting at `start`, aware of strings and escapes.
// Returns empty when the braces never close.
std::string_view balanced_object(std::string_view text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return text.substr(start, i - start + 1);
  }
  return {};
}

}  // namespace

Expected<SceneGraph, LlmParseError> parse_llm_response(std::string_view response) {
  std::size_t pos = 0;
  while ((pos = response.find('{', pos)) != std::string_view::npos) {
    std::string_view candidate = balanced_object(response, pos);
    if (candidate.empty()) break;  // unclosed brace: nothing further can parse
    auto graph = parse_graph(candidate);
    if (graph.ok()) {
      ValidationReport report = validate_graph(graph.value(), ValidationMode::lenient);
      if (!report.accepted()) {
        return LlmParseError{"invalid-graph",
                             "response graph failed validation (" +
                                 report.errors.front().rule + " at " +
                                 report.errors.front().location + ")",
                             std::move(report)};
      }
      return graph.value();
    }
    // Not a graph body (prose brace, nested fragment, wrong schema): scan on,
    // including into the candidate, so nested objects are still considered.
    ++pos;
  }
  return LlmParseError{"unparsable-response", "no scene-graph body found in response", {}};
}

std::vector<JournalEntry> read_journal(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::vector<JournalEntry> entries;
  if (!in) return entries;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    JournalEntry entry;
    std::string status;
    std::string attempts;
    std::string timestamp;
    if (!std::getline(fields, entry.img_id, '\t')) continue;
    if (!std::getline(fields, status, '\t')) continue;
    if (!std::getline(fields, attempts, '\t')) continue;
    std::getline(fields, timestamp, '\t');
    if (status == "done") entry.status = JobStatus::done;
    else if (status == "failed") entry.status = JobStatus::failed;
    else if (status == "pending") entry.status = JobStatus::pending;
    else continue;  // torn or foreign line
    entry.attempts = std::atoi(attempts.c_str());
    entry.timestamp = std::atoll(timestamp.c_str());
    entries.push_back(std::move(entry));
  }
  return entries;
}

namespace {

const char* status_name(JobStatus s) {
  switch (s) {
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
    case JobStatus::pending: return "pending";
  }
  return "pending";
}

}  // namespace

PipelineResult run_pipeline(std::vector<AnnotationJob> manifest, const PromptConfig& config,
                            ChatClient& client, const PipelineOptions& options,
                            const std::string& journal_path,
                            const std::string& records_out_path) {
  PipelineResult result;

  std::unordered_map<std::string, JournalEntry> journal_state;
  for (JournalEntry& entry : read_journal(journal_path)) {
    journal_state[entry.img_id] = std::move(entry);  // last entry wins
  }

  std::ofstream journal_out(journal_path, std::ios::app | std::ios::binary);
  if (!journal_out) throw std::runtime_error("cannot open journal: " + journal_path);
  std::ofstream records_out(records_out_path, std::ios::app | std::ios::binary);
  if (!records_out) throw std::runtime_error("cannot open output: " + records_out_path);

  const std::string base_prompt = build_prompt(config);

  std::mutex sink_mutex;  // serializes journal/record appends
  std::atomic<std::size_t> cursor{0};
  std::atomic<std::uint64_t> requests{0};
  std::atomic<std::uint64_t> done_count{0};
  std::atomic<std::uint64_t> failed_count{0};
  std::atomic<std::uint64_t> skipped_count{0};

  auto cancelled = [&] { return options.cancel != nullptr && options.cancel->load(); };

  // Record first, journal second: a crash between the two re-annotates the
  // job on resume (duplicate record line, deduped downstream) instead of
  // silently losing a success.
  auto commit = [&](AnnotationJob& job, const SceneGraph& graph) {
    DatasetRecord fragment;
    fragment.img_id = job.img_id;
    fragment.caption_ori = job.caption;
    fragment.score_text = "0";
    fragment.score = 0.0;
    fragment.url = job.image_ref;
    fragment.graph = graph;
    std::string line = serialize_record(fragment);
    std::lock_guard<std::mutex> lock(sink_mutex);
    records_out << line << '\n';
    records_out.flush();
    journal_out << job.img_id << '\t' << status_name(JobStatus::done) << '\t' << job.attempts
                << '\t' << std::time(nullptr) << '\n';
    journal_out.flush();
  };
  auto mark_failed = [&](AnnotationJob& job) {
    std::lock_guard<std::mutex> lock(sink_mutex);
    journal_out << job.img_id << '\t' << status_name(JobStatus::failed) << '\t' << job.attempts
                << '\t' << std::time(nullptr) << '\n';
    journal_out.flush();
  };

  auto worker = [&] {
    for (;;) {
      std::size_t index = cursor.fetch_add(1);
      if (index >= manifest.size()) return;
      AnnotationJob& job = manifest[index];

      auto prior = journal_state.find(job.img_id);
      if (prior != journal_state.end() && prior->second.status == JobStatus::done) {
        job.status = JobStatus::done;
        job.attempts = prior->second.attempts;
        skipped_count.fetch_add(1);
        continue;
      }
      if (cancelled()) return;

      std::string prompt = base_prompt;
      if (config.include_caption && !job.caption.empty()) {
        prompt += "\n\nOriginal caption of the image: " + job.caption;
      }

      bool done = false;
      for (int attempt = 1; attempt <= options.max_retries && !done; ++attempt) {
        if (cancelled()) return;  // job stays pending for the resumed run
        job.attempts = attempt;
        requests.fetch_add(1);
        auto reply = client.complete(prompt, job.image_ref);
        if (reply.ok()) {
          auto graph = parse_llm_response(reply.value());
          if (graph.ok()) {
            commit(job, graph.value());
            job.status = JobStatus::done;
            done_count.fetch_add(1);
            done = true;
            break;
          }
          job.last_error = graph.error().code + ": " + graph.error().message;
        } else {
          job.last_error = reply.error().code + ": " + reply.error().message;
        }
        if (attempt < options.max_retries && options.backoff_initial.count() > 0) {
          std::this_thread::sleep_for(options.backoff_initial * (1LL << (attempt - 1)));
        }
      }
      if (!done) {
        job.status = JobStatus::failed;
        failed_count.fetch_add(1);
        mark_failed(job);
      }
    }
  };

  int n_threads = std::max(1, std::min<int>(options.parallelism,
                                            static_cast<int>(manifest.size())));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  result.requests = requests.load();
  result.done = done_count.load();
  result.failed = failed_count.load();
  result.skipped = skipped_count.load();
  result.jobs = std::move(manifest);
  return result;
}

Expected<std::vector<AnnotationJob>, ParseError> read_job_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    ParseError err;
    err.code = "io";
    err.message = "cannot open manifest: " + path;
    return err;
  }
  std::vector<AnnotationJob> jobs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object() || !j.contains("img_id") ||
        !j.at("img_id").is_string() || !j.contains("image_ref") ||
        !j.at("image_ref").is_string()) {
      ParseError err;
      err.code = "bad-manifest";
      err.message = "manifest line " + std::to_string(line_no) +
                    " is not {\"img_id\": ..., \"image_ref\": ...}";
      return err;
    }
    AnnotationJob job;
    job.img_id = j.at("img_id").get<std::string>();
    job.image_ref = j.at("image_ref").get<std::string>();
    if (j.contains("caption") && j.at("caption").is_string()) {
      job.caption = j.at("caption").get<std::string>();
    }
    jobs.push_back(std::move(job));
  }
  return jobs;
}

Expected<AuditSample, AuditError> sample_audit(std::vector<std::string> corpus_ids,
                                               std::uint64_t size, std::uint64_t seed) {
  if (size > corpus_ids.size()) {
    return AuditError{"sample size " + std::to_string(size) + " exceeds corpus size " +
                      std::to_string(corpus_ids.size())};
  }
  std::sort(corpus_ids.begin(), corpus_ids.end());
  SplitMix64 rng{seed};
  // Partial Fisher-Yates: the first `size` slots are the sample.
  for (std::uint64_t i = 0; i < size; ++i) {
    std::uint64_t j = i + rng.bounded(corpus_ids.size() - i);
    std::swap(corpus_ids[i], corpus_ids[j]);
  }
  AuditSample sample;
  sample.seed = seed;
  sample.sample_size = size;
  sample.img_ids.assign(corpus_ids.begin(),
                        corpus_ids.begin() + static_cast<std::ptrdiff_t>(size));
  return sample;
}

std::string render_audit_bundle(const std::vector<DatasetRecord>& records,
                                const AuditSample& sample) {
  std::unordered_map<std::string, const DatasetRecord*> by_id;
  for (const DatasetRecord& r : records) by_id.emplace(r.img_id, &r);

  std::ostringstream out;
  out << "# Annotation audit bundle\n";
  out << "seed: " << sample.seed << "\nsample_size: " << sample.sample_size << "\n\n";
  out << "Review each graph against its image. Mark hallucinated objects or\n"
         "relations (not present in the image) and mislabeled entries in the\n"
         "tally sheet.\n\n";
  for (const std::string& id : sample.img_ids) {
    out << "## img_id " << id << "\n";
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      out << "(record not found in corpus)\n\n";
      continue;
    }
    const DatasetRecord& r = *it->second;
    out << "caption: " << r.caption_ori << "\n";
    out << "url: " << r.url << "\n";
    out << "graph: " << serialize_graph(r.graph) << "\n\n";
  }
  return out.str();
}

std::string render_audit_tally_template(const AuditSample& sample) {
  std::ostringstream out;
  out << "img_id\thallucination\tmislabel\tnotes\n";
  for (const std::string& id : sample.img_ids) out << id << "\t\t\t\n";
  return out.str();
}

Expected<AuditRates, AuditError> audit_rates_from_tally(std::string_view tally_tsv) {
  AuditRates rates;
  std::istringstream in{std::string(tally_tsv)};
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("img_id\t", 0) == 0) continue;  // header
    }
    std::istringstream fields(line);
    std::string img_id, hallucination, mislabel;
    std::getline(fields, img_id, '\t');
    std::getline(fields, hallucination, '\t');
    std::getline(fields, mislabel, '\t');
    if (img_id.empty()) continue;
    ++rates.reviewed;
    if (hallucination == "1" || hallucination == "yes") ++rates.hallucinations;
    if (mislabel == "1" || mislabel == "yes") ++rates.mislabels;
  }
  if (rates.reviewed == 0) return AuditError{"tally sheet has no data rows"};
  rates.hallucination_rate_percent =
      100.0 * static_cast<double>(rates.hallucinations) / static_cast<double>(rates.reviewed);
  rates.mislabel_rate_percent =
      100.0 * static_cast<double>(rates.mislabels) / static_cast<double>(rates.reviewed);
  return rates;
}

}  // namespace sgkit
