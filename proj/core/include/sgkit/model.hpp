#pragma once

// In-memory scene graph and dataset record representation.
//
// A scene graph is a list of items (objects with attribute strings) plus a
// list of relations (directed subject -> object edges with a verb phrase).
// All types are plain values; every function here is pure and thread-safe.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sgkit/expected.hpp"

namespace sgkit {

// Unknown serialized fields carried through parse -> serialize untouched.
// `value_json` holds the compact JSON text of the original value.
struct ExtraField {
  std::string key;
  std::string value_json;

  bool operator==(const ExtraField&) const = default;
};

struct Item {
  std::int64_t item_id = 0;
  std::string label;
  std::vector<std::string> attributes;
  std::optional<std::int64_t> global_item_id;
  std::vector<ExtraField> extra;

  bool operator==(const Item&) const = default;
};

struct Relation {
  std::int64_t triple_id = 0;
  std::int64_t item1 = 0;  // subject item_id
  std::string relation;    // verb phrase, possibly multi-word
  std::int64_t item2 = 0;  // object item_id
  std::optional<std::int64_t> global_relation_id;
  std::vector<ExtraField> extra;

  bool operator==(const Relation&) const = default;
};

struct SceneGraph {
  std::vector<Item> items;
  std::vector<Relation> relations;

  bool operator==(const SceneGraph&) const = default;
};

struct DatasetRecord {
  std::string img_id;
  std::string name;
  std::string caption_ori;
  // Aesthetic score. `score_text` preserves the exact decimal text as it
  // appeared in the source so serialization is bit-exact; `score` is the
  // parsed value used for range checks.
  std::string score_text;
  double score = 0.0;
  std::string url;
  SceneGraph graph;
  std::vector<ExtraField> extra;

  bool operator==(const DatasetRecord&) const = default;
};

// strict = construction-time rules (at least one attribute per object,
// aesthetic score > 6.5); lenient = ingest what exists, demote those two
// classes of violations to warnings.
enum class ValidationMode { strict, lenient };

struct ValidationIssue {
  std::string rule;      // stable rule id, e.g. "dup-item-id"
  std::string location;  // e.g. "items[3]", "relations[0]", "record"
  std::string message;

  bool operator==(const ValidationIssue&) const = default;
};

struct ValidationReport {
  std::vector<ValidationIssue> errors;
  std::vector<ValidationIssue> warnings;

  bool accepted() const { return errors.empty(); }
  bool operator==(const ValidationReport&) const = default;
};

// Rule ids emitted by validate/validate_graph.
namespace rules {
inline constexpr const char* kDupItemId = "dup-item-id";
inline constexpr const char* kDupTripleId = "dup-triple-id";
inline constexpr const char* kDanglingRef = "dangling-ref";
inline constexpr const char* kEmptyLabel = "empty-label";
inline constexpr const char* kEmptyAttribute = "empty-attribute";
inline constexpr const char* kEmptyRelation = "empty-relation";
inline constexpr const char* kNoAttribute = "no-attribute";
inline constexpr const char* kNegativeId = "negative-id";
inline constexpr const char* kSelfRelation = "self-relation";
inline constexpr const char* kDuplicateTriple = "duplicate-triple";
inline constexpr const char* kDuplicateAttribute = "duplicate-attribute";
inline constexpr const char* kEmptyImgId = "empty-img-id";
inline constexpr const char* kBadScore = "bad-score";
inline constexpr const char* kLowScore = "low-score";
}  // namespace rules

// Reports every violated invariant. Deterministic: issues are sorted by
// (location, rule, message), and the same input always yields the same
// report. Malformed content is an error entry, never a throw.
ValidationReport validate(const DatasetRecord& record, ValidationMode mode);
ValidationReport validate_graph(const SceneGraph& graph, ValidationMode mode);

struct ResolvedTriple {
  std::int64_t triple_id = 0;
  Item subject;
  std::string relation;
  Item object;

  bool operator==(const ResolvedTriple&) const = default;
};

struct GraphError {
  std::string code;
  std::string message;
  std::int64_t triple_id = -1;
};

// One entry per relation in triple_id order with endpoints resolved.
Expected<std::vector<ResolvedTriple>, GraphError> triples(const SceneGraph& graph);

// Items that appear as neither endpoint of any relation, in item_id order.
std::vector<Item> single_objects(const SceneGraph& graph);

// Total nodes plus edges: |items| + total attribute count + |relations|.
// Each attribute string is one node; each relation record is one edge
// regardless of how many words the phrase has.
std::size_t annotation_length(const SceneGraph& graph);

// NFC-normalized, lowercased, whitespace-trimmed/collapsed text. Idempotent.
std::string canonical_text(std::string_view text);

// canonical_text applied to every label, attribute and relation phrase.
// Structure (ids, ordering, extras) is untouched. Idempotent.
SceneGraph canonicalize(const SceneGraph& graph);

}  // namespace sgkit
