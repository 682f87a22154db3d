#pragma once

// Corpus statistics: object counts (with a proper-noun-excluded variant),
// annotation lengths, word-count histograms, and top-k relation/attribute
// frequency tables.
//
// Everything is a pure fold over records. StatsAccumulator is mergeable, so
// a corpus may be sharded across threads; merge order cannot change results
// because all counters are exact integers and mean/std are derived from the
// merged sums at report time.

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sgkit/model.hpp"

namespace sgkit {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation

  bool operator==(const MeanStd&) const = default;
};

struct TermCount {
  std::string term;
  std::uint64_t count = 0;
  double percent = 0.0;  // of all occurrences of that kind
};

// Inner edges of a half-open histogram; {5,10,20} means
// [0,5) [5,10) [10,20) [20,inf).
using HistEdges = std::vector<std::uint64_t>;

struct Histogram {
  HistEdges edges;
  std::vector<std::uint64_t> counts;  // edges.size() + 1 bins
  std::vector<double> percents;       // sums to 100 (when total > 0)

  std::vector<std::string> bin_labels() const;
};

// Tokens in reading order paired with a sentence-start flag.
using Tokenizer = std::function<std::vector<std::string>(std::string_view)>;

// Unicode whitespace + punctuation split (ICU character classes).
std::vector<std::string> tokenize(std::string_view text);

// Whitespace-separated word count; the unit used by the word histograms.
std::size_t count_words(std::string_view text);

// Default heuristic: a capitalized token that is not at a sentence start
// and not in the allowlist is treated as a proper noun.
const std::set<std::string>& default_proper_noun_allowlist();
bool classify_proper_noun(std::string_view token, bool sentence_start,
                          const std::set<std::string>& allowlist = default_proper_noun_allowlist());

struct CaptionObjectCounts {
  std::uint64_t total = 0;
  std::uint64_t proper = 0;
};
using CaptionObjectCounter = std::function<CaptionObjectCounts(std::string_view)>;

struct StatsConfig {
  HistEdges object_word_edges = {5, 10, 20};
  HistEdges sg_word_edges = {10, 20, 30};
  std::size_t top_k = 10;
  Tokenizer tokenizer;                         // defaults to tokenize()
  CaptionObjectCounter caption_object_counter; // defaults to the naive noun heuristic
  std::function<bool(std::string_view label)> label_is_proper; // defaults to classify_proper_noun
};

// Naive noun stand-in: alphabetic non-stopword tokens; proper-ness via
// classify_proper_noun with sentence tracking. Replace with a real tagger
// through StatsConfig for serious caption analysis.
CaptionObjectCounts default_caption_object_counter(std::string_view caption);

struct StatsReport {
  std::uint64_t n_records = 0;
  MeanStd objects;            // items per record
  MeanStd objects_no_proper;  // items whose label is not a proper noun
  MeanStd sg_length;          // annotation_length per record
  MeanStd caption_length;     // tokenizer(caption).size() per record
  Histogram object_word_hist; // words per object description, over all objects
  Histogram sg_word_hist;     // words per scene graph, over all records
  std::vector<TermCount> top_relations;
  std::vector<TermCount> top_attributes;
};

class StatsAccumulator {
 public:
  explicit StatsAccumulator(StatsConfig config = {});

  void add(const DatasetRecord& record);
  void add_graph_only(const SceneGraph& graph);  // no caption fields
  void merge(const StatsAccumulator& other);

  StatsReport report() const;
  std::uint64_t n_records() const { return n_records_; }
  const StatsConfig& config() const { return config_; }

 private:
  struct Sums {
    std::uint64_t n = 0;
    std::uint64_t sum = 0;
    std::uint64_t sum_sq = 0;
    void add(std::uint64_t v) {
      ++n;
      sum += v;
      sum_sq += v * v;
    }
    void merge(const Sums& o) {
      n += o.n;
      sum += o.sum;
      sum_sq += o.sum_sq;
    }
    MeanStd mean_std() const;
  };

  StatsConfig config_;
  std::uint64_t n_records_ = 0;
  Sums objects_;
  Sums objects_no_proper_;
  Sums sg_length_;
  Sums caption_length_;
  std::vector<std::uint64_t> object_word_counts_;
  std::vector<std::uint64_t> sg_word_counts_;
  std::map<std::string, std::uint64_t> relation_counts_;
  std::map<std::string, std::uint64_t> attribute_counts_;
};

struct StatsError {
  std::string message;
};

// Per-operation entry points over in-memory corpora.
// object_count_stats: (all items, proper-noun-excluded items) per record.
Expected<std::pair<MeanStd, MeanStd>, StatsError> object_count_stats(
    const std::vector<DatasetRecord>& records, const StatsConfig& config = {});
// Caption-side variant of Table-style object counting: (total, total-proper).
Expected<std::pair<MeanStd, MeanStd>, StatsError> caption_object_stats(
    const std::vector<DatasetRecord>& records, const StatsConfig& config = {});
std::pair<MeanStd, MeanStd> length_stats(const std::vector<DatasetRecord>& records,
                                         const StatsConfig& config = {});  // (sg, caption)
std::pair<Histogram, Histogram> word_histograms(const std::vector<DatasetRecord>& records,
                                                const StatsConfig& config = {});

enum class TermKind { relation, attribute };
std::vector<TermCount> top_k_terms(const std::vector<DatasetRecord>& records, TermKind kind,
                                   std::size_t k);

Expected<StatsReport, StatsError> compute_stats(const std::vector<DatasetRecord>& records,
                                                const StatsConfig& config = {});

// Report rendering: fixed-layout text table and a machine-readable JSON
// document mirroring the StatsReport fields.
std::string stats_table_text(const StatsReport& report);
std::string stats_json_text(const StatsReport& report);

}  // namespace sgkit
