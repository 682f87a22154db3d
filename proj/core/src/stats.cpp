#include "sgkit/stats.hpp"

#include <unicode/locid.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace sgkit {

namespace {

std::size_t bin_index(const HistEdges& edges, std::uint64_t value) {
  std::size_t i = 0;
  while (i < edges.size() && value >= edges[i]) ++i;
  return i;
}

Histogram make_histogram(const HistEdges& edges, const std::vector<std::uint64_t>& counts) {
  Histogram h;
  h.edges = edges;
  h.counts = counts;
  std::uint64_t total = 0;
  for (std::uint64_t c : counts) total += c;
  h.percents.resize(counts.size(), 0.0);
  if (total > 0) {
    for (std::size_t i = 0; i < counts.size(); ++i) {
      h.percents[i] = 100.0 * static_cast<double>(counts[i]) / static_cast<double>(total);
    }
  }
  return h;
}

std::vector<TermCount> top_terms(const std::map<std::string, std::uint64_t>& counts,
                                 std::size_t k) {
  std::uint64_t total = 0;
  for (const auto& [term, c] : counts) total += c;
  std::vector<TermCount> all;
  all.reserve(counts.size());
  for (const auto& [term, c] : counts) {
    double pct = total > 0 ? 100.0 * static_cast<double>(c) / static_cast<double>(total) : 0.0;
    all.push_back({term, c, pct});
  }
  // count desc, ties broken lexicographically
  std::sort(all.begin(), all.end(), [](const TermCount& a, const TermCount& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.term < b.term;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

bool is_alpha_token(const icu::UnicodeString& us) {
  for (int i = 0; i < us.length();) {
    UChar32 c = us.char32At(i);
    i += U16_LENGTH(c);
    if (!u_isalpha(c)) return false;
  }
  return us.length() > 0;
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> kStop = {
      "a",    "an",   "the",  "of",   "in",   "on",    "at",    "and",  "or",   "with",
      "to",   "for",  "is",   "are",  "was",  "were",  "by",    "from", "as",   "it",
      "its",  "this", "that", "these","those","be",    "been",  "has",  "have", "had",
      "not",  "no",   "but",  "he",   "she",  "they",  "we",    "you",  "i",    "his",
      "her",  "their","our",  "your", "my",   "page",  "s"};
  return kStop;
}

std::string to_lower_utf8(const icu::UnicodeString& us) {
  icu::UnicodeString lowered = us;
  lowered.toLower(icu::Locale::getRoot());
  std::string out;
  lowered.toUTF8String(out);
  return out;
}

}  // namespace

std::vector<std::string> Histogram::bin_labels() const {
  std::vector<std::string> labels;
  std::uint64_t low = 0;
  for (std::uint64_t edge : edges) {
    labels.push_back("[" + std::to_string(low) + "," + std::to_string(edge) + ")");
    low = edge;
  }
  labels.push_back("[" + std::to_string(low) + ",inf)");
  return labels;
}

std::vector<std::string> tokenize(std::string_view text) {
  icu::UnicodeString us =
      icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int>(text.size())));
  std::vector<std::string> tokens;
  icu::UnicodeString current;
  auto flush = [&] {
    if (current.length() > 0) {
      std::string t;
      current.toUTF8String(t);
      tokens.push_back(std::move(t));
      current.remove();
    }
  };
  for (int i = 0; i < us.length();) {
    UChar32 c = us.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c) || u_ispunct(c)) {
      flush();
    } else {
      current.append(c);
    }
  }
  flush();
  return tokens;
}

std::size_t count_words(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    bool ws = std::isspace(c) != 0;
    if (!ws && !in_word) ++n;
    in_word = !ws;
  }
  return n;
}

const std::set<std::string>& default_proper_noun_allowlist() {
  static const std::set<std::string> kAllow = {"I", "I'm", "I'll", "I've", "I'd",
                                               "TV", "DIY", "OK", "3D"};
  return kAllow;
}

bool classify_proper_noun(std::string_view token, bool sentence_start,
                          const std::set<std::string>& allowlist) {
  if (token.empty() || sentence_start) return false;
  if (allowlist.count(std::string(token))) return false;
  icu::UnicodeString us =
      icu::UnicodeString::fromUTF8(icu::StringPiece(token.data(), static_cast<int>(token.size())));
  if (us.length() == 0) return false;
  return u_isupper(us.char32At(0)) != 0;
}

CaptionObjectCounts default_caption_object_counter(std::string_view caption) {
  // Sentence-start tracking over the raw text, then the same tokenization
  // as the caption length measure.
  icu::UnicodeString us = icu::UnicodeString::fromUTF8(
      icu::StringPiece(caption.data(), static_cast<int>(caption.size())));
  CaptionObjectCounts counts;
  icu::UnicodeString current;
  bool sentence_start = true;
  bool current_at_start = true;
  auto flush = [&] {
    if (current.length() == 0) return;
    if (is_alpha_token(current)) {
      std::string lowered = to_lower_utf8(current);
      if (!stopwords().count(lowered)) {
        ++counts.total;
        std::string raw;
        current.toUTF8String(raw);
        if (classify_proper_noun(raw, current_at_start)) ++counts.proper;
      }
    }
    current.remove();
  };
  for (int i = 0; i < us.length();) {
    UChar32 c = us.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      flush();
    } else if (u_ispunct(c)) {
      flush();
      if (c == '.' || c == '!' || c == '?') sentence_start = true;
    } else {
      if (current.length() == 0) {
        current_at_start = sentence_start;
        sentence_start = false;
      }
      current.append(c);
    }
  }
  flush();
  return counts;
}

MeanStd StatsAccumulator::Sums::mean_std() const {
  if (n == 0) return {};
  long double nn = static_cast<long double>(n);
  long double mean = static_cast<long double>(sum) / nn;
  long double var = static_cast<long double>(sum_sq) / nn - mean * mean;
  if (var < 0) var = 0;  // guard tiny negative round-off
  return {static_cast<double>(mean), static_cast<double>(std::sqrt(var))};
}

StatsAccumulator::StatsAccumulator(StatsConfig config) : config_(std::move(config)) {
  if (!config_.tokenizer) config_.tokenizer = [](std::string_view s) { return tokenize(s); };
  if (!config_.caption_object_counter) {
    config_.caption_object_counter = [](std::string_view s) {
      return default_caption_object_counter(s);
    };
  }
  if (!config_.label_is_proper) {
    config_.label_is_proper = [](std::string_view label) {
      return classify_proper_noun(label, /*sentence_start=*/false);
    };
  }
  object_word_counts_.assign(config_.object_word_edges.size() + 1, 0);
  sg_word_counts_.assign(config_.sg_word_edges.size() + 1, 0);
}

void StatsAccumulator::add_graph_only(const SceneGraph& graph) {
  ++n_records_;
  objects_.add(graph.items.size());
  std::uint64_t no_proper = 0;
  std::uint64_t sg_words = 0;
  for (const Item& item : graph.items) {
    if (!config_.label_is_proper(item.label)) ++no_proper;
    std::uint64_t object_words = count_words(item.label);
    for (const std::string& attr : item.attributes) {
      object_words += count_words(attr);
      ++attribute_counts_[canonical_text(attr)];
    }
    ++object_word_counts_[bin_index(config_.object_word_edges, object_words)];
    sg_words += object_words;
  }
  for (const Relation& rel : graph.relations) {
    sg_words += count_words(rel.relation);
    ++relation_counts_[canonical_text(rel.relation)];
  }
  objects_no_proper_.add(no_proper);
  sg_length_.add(annotation_length(graph));
  ++sg_word_counts_[bin_index(config_.sg_word_edges, sg_words)];
}

void StatsAccumulator::add(const DatasetRecord& record) {
  add_graph_only(record.graph);
  caption_length_.add(config_.tokenizer(record.caption_ori).size());
}

void StatsAccumulator::merge(const StatsAccumulator& other) {
  n_records_ += other.n_records_;
  objects_.merge(other.objects_);
  objects_no_proper_.merge(other.objects_no_proper_);
  sg_length_.merge(other.sg_length_);
  caption_length_.merge(other.caption_length_);
  for (std::size_t i = 0; i < object_word_counts_.size(); ++i) {
    object_word_counts_[i] += other.object_word_counts_[i];
  }
  for (std::size_t i = 0; i < sg_word_counts_.size(); ++i) {
    sg_word_counts_[i] += other.sg_word_counts_[i];
  }
  for (const auto& [term, c] : other.relation_counts_) relation_counts_[term] += c;
  for (const auto& [term, c] : other.attribute_counts_) attribute_counts_[term] += c;
}

StatsReport StatsAccumulator::report() const {
  StatsReport r;
  r.n_records = n_records_;
  r.objects = objects_.mean_std();
  r.objects_no_proper = objects_no_proper_.mean_std();
  r.sg_length = sg_length_.mean_std();
  r.caption_length = caption_length_.mean_std();
  r.object_word_hist = make_histogram(config_.object_word_edges, object_word_counts_);
  r.sg_word_hist = make_histogram(config_.sg_word_edges, sg_word_counts_);
  r.top_relations = top_terms(relation_counts_, config_.top_k);
  r.top_attributes = top_terms(attribute_counts_, config_.top_k);
  return r;
}

Expected<std::pair<MeanStd, MeanStd>, StatsError> object_count_stats(
    const std::vector<DatasetRecord>& records, const StatsConfig& config) {
  if (records.empty()) return StatsError{"empty corpus"};
  StatsAccumulator acc(config);
  for (const DatasetRecord& r : records) acc.add(r);
  StatsReport rep = acc.report();
  return std::pair{rep.objects, rep.objects_no_proper};
}

Expected<std::pair<MeanStd, MeanStd>, StatsError> caption_object_stats(
    const std::vector<DatasetRecord>& records, const StatsConfig& config) {
  if (records.empty()) return StatsError{"empty corpus"};
  StatsAccumulator acc(config);  // resolves the default counter
  const CaptionObjectCounter& counter = acc.config().caption_object_counter;
  std::uint64_t n = 0, sum_t = 0, sq_t = 0, sum_np = 0, sq_np = 0;
  for (const DatasetRecord& r : records) {
    CaptionObjectCounts c = counter(r.caption_ori);
    std::uint64_t np = c.total - c.proper;
    ++n;
    sum_t += c.total;
    sq_t += c.total * c.total;
    sum_np += np;
    sq_np += np * np;
  }
  auto mean_std = [n](std::uint64_t sum, std::uint64_t sq) {
    long double nn = static_cast<long double>(n);
    long double mean = static_cast<long double>(sum) / nn;
    long double var = static_cast<long double>(sq) / nn - mean * mean;
    if (var < 0) var = 0;
    return MeanStd{static_cast<double>(mean), static_cast<double>(std::sqrt(var))};
  };
  return std::pair{mean_std(sum_t, sq_t), mean_std(sum_np, sq_np)};
}

std::pair<MeanStd, MeanStd> length_stats(const std::vector<DatasetRecord>& records,
                                         const StatsConfig& config) {
  StatsAccumulator acc(config);
  for (const DatasetRecord& r : records) acc.add(r);
  StatsReport rep = acc.report();
  return {rep.sg_length, rep.caption_length};
}

std::pair<Histogram, Histogram> word_histograms(const std::vector<DatasetRecord>& records,
                                                const StatsConfig& config) {
  StatsAccumulator acc(config);
  for (const DatasetRecord& r : records) acc.add(r);
  StatsReport rep = acc.report();
  return {rep.object_word_hist, rep.sg_word_hist};
}

std::vector<TermCount> top_k_terms(const std::vector<DatasetRecord>& records, TermKind kind,
                                   std::size_t k) {
  StatsConfig config;
  config.top_k = k;
  StatsAccumulator acc(config);
  for (const DatasetRecord& r : records) acc.add(r);
  StatsReport rep = acc.report();
  return kind == TermKind::relation ? rep.top_relations : rep.top_attributes;
}

Expected<StatsReport, StatsError> compute_stats(const std::vector<DatasetRecord>& records,
                                                const StatsConfig& config) {
  if (records.empty()) return StatsError{"empty corpus"};
  StatsAccumulator acc(config);
  for (const DatasetRecord& r : records) acc.add(r);
  return acc.report();
}

namespace {

void append_hist_rows(std::ostringstream& out, const char* title, const Histogram& h) {
  out << title << "\n";
  std::vector<std::string> labels = h.bin_labels();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%8.2f%%", h.percents[i]);
    out << "  " << labels[i] << "  " << h.counts[i] << "  " << buf << "\n";
  }
}

}  // namespace

std::string stats_table_text(const StatsReport& report) {
  std::ostringstream out;
  auto row = [&](const char* name, const MeanStd& ms) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%-24s %10.4f ± %.4f\n", name, ms.mean, ms.std);
    out << buf;
  };
  out << "records: " << report.n_records << "\n";
  row("objects", report.objects);
  row("objects (w/o proper)", report.objects_no_proper);
  row("sg length", report.sg_length);
  row("caption length", report.caption_length);
  append_hist_rows(out, "object word histogram", report.object_word_hist);
  append_hist_rows(out, "sg word histogram", report.sg_word_hist);
  auto terms = [&](const char* title, const std::vector<TermCount>& list) {
    out << title << "\n";
    for (const TermCount& t : list) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "  %-24s %10llu  %6.2f%%\n", t.term.c_str(),
                    static_cast<unsigned long long>(t.count), t.percent);
      out << buf;
    }
  };
  terms("top relations", report.top_relations);
  terms("top attributes", report.top_attributes);
  return out.str();
}

std::string stats_json_text(const StatsReport& report) {
  nlohmann::ordered_json j;
  j["n_records"] = report.n_records;
  auto ms = [](const MeanStd& m) {
    return nlohmann::ordered_json{{"mean", m.mean}, {"std", m.std}};
  };
  j["objects"] = ms(report.objects);
  j["objects_no_proper"] = ms(report.objects_no_proper);
  j["sg_length"] = ms(report.sg_length);
  j["caption_length"] = ms(report.caption_length);
  auto hist = [](const Histogram& h) {
    nlohmann::ordered_json out;
    std::vector<std::string> labels = h.bin_labels();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      out[labels[i]] = {{"count", h.counts[i]}, {"percent", h.percents[i]}};
    }
    return out;
  };
  j["object_word_hist"] = hist(report.object_word_hist);
  j["sg_word_hist"] = hist(report.sg_word_hist);
  auto terms = [](const std::vector<TermCount>& list) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const TermCount& t : list) {
      arr.push_back({{"term", t.term}, {"count", t.count}, {"percent", t.percent}});
    }
    return arr;
  };
  j["top_relations"] = terms(report.top_relations);
  j["top_attributes"] = terms(report.top_attributes);
  return j.dump(2);
}

}  // namespace sgkit
