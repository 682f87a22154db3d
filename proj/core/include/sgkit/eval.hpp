#pragma once

// Consistency metrics between a predicted and a reference scene graph:
// SG-IoU over ⟨subject, relation, object⟩ triples, Entity-IoU over object
// labels, Relation-IoU over relation phrases. All three are multiset IoUs
// (Σ min / Σ max), so duplicated objects are scored, and all strings are
// canonicalized before matching. Also hosts the complex-scene benchmark
// filter and the image-round-trip accuracy protocol drivers.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sgkit/clients.hpp"
#include "sgkit/expected.hpp"
#include "sgkit/model.hpp"

namespace sgkit {

using Multiset = std::map<std::string, std::uint64_t>;

struct TripleKey {
  std::string subject_label;
  std::string relation_phrase;
  std::string object_label;

  bool operator==(const TripleKey&) const = default;
  auto operator<=>(const TripleKey&) const = default;

  std::string joined() const;  // "subject|relation|object"
};

struct IoUReport {
  double sg_iou = 0.0;
  double entity_iou = 0.0;
  double relation_iou = 0.0;

  bool operator==(const IoUReport&) const = default;
};

// Canonicalized labels with multiplicity (two persons -> "person" x2).
Multiset entity_list(const SceneGraph& graph);
// Canonicalized relation phrases with multiplicity.
Multiset relation_list(const SceneGraph& graph);
// One TripleKey per relation, endpoints resolved to labels, attributes
// dropped; keyed as a multiset via TripleKey::joined().
Expected<Multiset, GraphError> sg_list(const SceneGraph& graph);

// Σ min(count_a, count_b) / Σ max(count_a, count_b).
// Both empty -> 1.0; exactly one empty -> 0.0.
double iou(const Multiset& a, const Multiset& b);

Expected<IoUReport, GraphError> iou_report(const SceneGraph& predicted,
                                           const SceneGraph& reference);

struct BenchManifest {
  std::vector<std::string> img_ids;
  std::uint64_t threshold = 4;  // strictly-greater-than bound on |relations|
  std::string source_split;
  std::uint64_t scanned = 0;
};

// Records with more than `threshold` relations, ids in input order.
BenchManifest select_complex(const std::vector<DatasetRecord>& records,
                             std::uint64_t threshold = 4,
                             std::string source_split = "");

// Manifest file: '#'-prefixed summary header then one img_id per line.
void write_bench_manifest(const std::string& path, const BenchManifest& manifest);
BenchManifest read_bench_manifest(const std::string& path);

// ---------------------------------------------------------------------------
// Image round-trip accuracy protocol ("+" metrics).

struct ExtractionError {
  std::string code;  // client error code, "unparsable-response" or "invalid-graph"
  std::string message;
  ValidationReport report;
};

// Asks a vision LLM to extract the scene graph visible in an image, using
// the same output schema as the annotation prompt but framed as extraction.
Expected<SceneGraph, ExtractionError> extract_sg_from_image(const std::string& image_ref,
                                                            ChatClient& client);
std::string extraction_prompt();

enum class AccuracyVariant { caption, sg };

// One record: generate an image from the chosen annotation, extract scene
// graphs from the generated and the ground-truth image, and score their
// consistency.
Expected<IoUReport, ClientError> annotation_accuracy_protocol(const DatasetRecord& record,
                                                              ImageGenClient& generator,
                                                              ChatClient& extractor,
                                                              AccuracyVariant variant);

struct AccuracyBatchResult {
  IoUReport average;                     // over successful records
  std::uint64_t successes = 0;
  std::uint64_t failures = 0;
  std::vector<std::pair<std::string, IoUReport>> per_record;  // successful only
  std::vector<std::pair<std::string, std::string>> skipped;   // (img_id, reason)
};

AccuracyBatchResult annotation_accuracy_batch(const std::vector<DatasetRecord>& records,
                                              ImageGenClient& generator, ChatClient& extractor,
                                              AccuracyVariant variant);

}  // namespace sgkit
