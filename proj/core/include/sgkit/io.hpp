#pragma once

// Serialization and corpus streaming.
//
// Record format: UTF-8 JSON objects with the field names
//   img_id, name, caption_ori, score, url,
//   items[{item_id,label,attributes,global_item_id}],
//   relations[{triple_id,item1,relation,item2,global_relation_id}]
// Container: .jsonl (one object per line), a single top-level JSON array,
// or plain concatenated objects. Unknown fields round-trip untouched.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "sgkit/expected.hpp"
#include "sgkit/model.hpp"

namespace sgkit {

struct ParseError {
  std::string code;     // "syntax", "missing-field", "bad-type"
  std::string message;
  std::size_t byte_offset = 0;  // offset into the record text for syntax errors
  std::string field;            // offending field for schema errors
};

// One record text -> DatasetRecord. Numbers survive exactly as written:
// the score keeps its original decimal text alongside the parsed value,
// and unknown fields are preserved for re-emission.
Expected<DatasetRecord, ParseError> parse_record(std::string_view text);

// Scene-graph fields only ({"items": [...], "relations": [...]}); used by
// the annotation-response parser. Non-graph fields are ignored.
Expected<SceneGraph, ParseError> parse_graph(std::string_view text);

// Canonical single-line JSON: known fields in the fixed order
// (img_id, name, caption_ori, score, url, items, relations), unknown fields
// re-emitted afterwards in their original order. Structurally equal records
// serialize to identical bytes; serialize -> parse -> serialize is a
// fixpoint.
std::string serialize_record(const DatasetRecord& record);
std::string serialize_graph(const SceneGraph& graph);

struct IngestStats {
  std::uint64_t records_ok = 0;
  std::uint64_t records_failed = 0;
  // First few failures, as (approximate byte offset in the stream, message).
  std::vector<std::pair<std::size_t, std::string>> first_error_locations;
  bool io_failed = false;
  std::string io_error;

  std::uint64_t records_seen() const { return records_ok + records_failed; }
};

inline constexpr std::size_t kMaxRecordedErrors = 10;

using RecordConsumer = std::function<void(DatasetRecord&&)>;
using ErrorConsumer = std::function<void(const ParseError&)>;

// Streams every record in input order with memory bounded by the largest
// single record, not the corpus. Malformed records are reported and the
// stream continues; only an unrecoverable read failure stops it early
// (stats.io_failed is set).
IngestStats stream_records(std::istream& source, const RecordConsumer& on_record,
                           const ErrorConsumer& on_error = nullptr);
IngestStats stream_records_file(const std::string& path, const RecordConsumer& on_record,
                                const ErrorConsumer& on_error = nullptr);

// Convenience for small corpora and tests.
std::vector<DatasetRecord> load_records(const std::string& path);

struct SplitSpec {
  std::uint64_t train_count = 0;
  std::uint64_t val_count = 0;
  std::uint64_t test_count = 0;
  std::uint64_t seed = 0;

  std::uint64_t total() const { return train_count + val_count + test_count; }
};

struct SplitResult {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

struct SplitError {
  std::string message;
};

// Deterministic split: ids are sorted, shuffled by a seeded Fisher-Yates
// (platform-independent PRNG), and sliced into the three requested
// prefixes. Same ids + same seed always produce identical output.
Expected<SplitResult, SplitError> split_dataset(std::vector<std::string> ids,
                                                const SplitSpec& spec);

// Id-list files: one id per line.
void write_id_list(const std::string& path, const std::vector<std::string>& ids);
std::vector<std::string> read_id_list(const std::string& path);

}  // namespace sgkit
