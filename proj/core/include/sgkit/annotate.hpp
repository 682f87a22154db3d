#pragma once

// Automated scene-graph annotation of images through a chat-completion
// endpoint: prompt construction from the construction rules, tolerant
// response parsing, a journaled batch pipeline with bounded parallelism,
// retries and idempotent resume, and reproducible audit sampling.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sgkit/clients.hpp"
#include "sgkit/expected.hpp"
#include "sgkit/io.hpp"
#include "sgkit/model.hpp"

namespace sgkit {

struct PromptConfig {
  // Coverage instruction preceding the numbered rules.
  std::string coverage_text;
  // The four construction rules, in order: unique object IDs, abstract
  // adjective attributes, specific relation verbs, person labeling.
  // Custom rules are appended after the defaults.
  std::vector<std::string> rule_texts;
  std::string output_format_instructions;
  std::string model_name = "gpt-4o";
  double temperature = 0.0;
  bool include_caption = false;  // attach the source caption to the request
};

// Config with all default texts filled in.
PromptConfig default_prompt_config();

// Deterministic prompt: coverage instruction, numbered rules, then the
// machine-readable output format instruction.
std::string build_prompt(const PromptConfig& config);

struct LlmParseError {
  std::string code;  // "unparsable-response" | "invalid-graph"
  std::string message;
  ValidationReport report;  // populated for invalid-graph
};

// Extracts the first well-formed scene-graph body from a model reply,
// tolerating surrounding prose and code fences, and lenient-validates it.
Expected<SceneGraph, LlmParseError> parse_llm_response(std::string_view response);

enum class JobStatus { pending, done, failed };

struct AnnotationJob {
  std::string img_id;
  std::string image_ref;  // URL or local path
  std::string caption;    // optional; sent only when include_caption is set
  JobStatus status = JobStatus::pending;
  int attempts = 0;
  std::optional<std::string> last_error;
};

// Journal line format: img_id<TAB>status<TAB>attempts<TAB>timestamp.
// Append-only; on resume the last entry per img_id wins.
struct JournalEntry {
  std::string img_id;
  JobStatus status = JobStatus::pending;
  int attempts = 0;
  std::int64_t timestamp = 0;  // unix seconds
};

std::vector<JournalEntry> read_journal(const std::string& path);

struct PipelineOptions {
  int parallelism = 4;
  int max_retries = 3;
  // Exponential backoff: initial delay, doubled per retry. Tests set the
  // initial delay to zero.
  std::chrono::milliseconds backoff_initial{1000};
  // Cooperative stop: checked before each request; pending jobs stay
  // pending in the journal so a resumed run picks them up.
  std::atomic<bool>* cancel = nullptr;
};

struct PipelineResult {
  std::uint64_t done = 0;
  std::uint64_t failed = 0;
  std::uint64_t skipped = 0;    // already done per journal
  std::uint64_t requests = 0;   // outbound calls actually issued
  std::vector<AnnotationJob> jobs;  // final state, manifest order
};

// Runs every pending job against the endpoint with at most
// `parallelism` requests in flight. Each success appends one serialized
// record fragment to `records_out_path` and a journal entry; re-running
// with the same journal never re-annotates a done job.
PipelineResult run_pipeline(std::vector<AnnotationJob> manifest, const PromptConfig& config,
                            ChatClient& client, const PipelineOptions& options,
                            const std::string& journal_path,
                            const std::string& records_out_path);

// Manifest file: JSONL of {"img_id": ..., "image_ref": ..., "caption": ...}.
Expected<std::vector<AnnotationJob>, ParseError> read_job_manifest(const std::string& path);

// ---------------------------------------------------------------------------
// Audit sampling.

struct AuditSample {
  std::vector<std::string> img_ids;  // drawn without replacement
  std::uint64_t seed = 0;
  std::uint64_t sample_size = 0;
};

struct AuditError {
  std::string message;
};

// Reproducible without-replacement sample of the corpus ids.
Expected<AuditSample, AuditError> sample_audit(std::vector<std::string> corpus_ids,
                                               std::uint64_t size, std::uint64_t seed);

// Human-review bundle: one section per sampled record (caption, url,
// serialized graph) plus a tally sheet with empty hallucination/mislabel
// columns to be filled in by the reviewer.
std::string render_audit_bundle(const std::vector<DatasetRecord>& records,
                                const AuditSample& sample);
std::string render_audit_tally_template(const AuditSample& sample);

struct AuditRates {
  std::uint64_t reviewed = 0;
  std::uint64_t hallucinations = 0;
  std::uint64_t mislabels = 0;
  double hallucination_rate_percent = 0.0;
  double mislabel_rate_percent = 0.0;
};

// Reads back a filled tally sheet (TSV: img_id, hallucination, mislabel,
// notes; 1/0 marks) and computes the audit rates.
Expected<AuditRates, AuditError> audit_rates_from_tally(std::string_view tally_tsv);

}  // namespace sgkit
