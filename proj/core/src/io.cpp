#include "sgkit/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <unordered_set>

#include "json.hpp"
#include "sgkit/rng.hpp"

namespace sgkit {

namespace {

using ojson = nlohmann::ordered_json;

ParseError field_error(std::string code, const std::string& field, std::string message) {
  ParseError err;
  err.code = std::move(code);
  err.message = std::move(message);
  err.field = field;
  return err;
}

ParseError missing_field(const std::string& field) {
  return field_error("missing-field", field, "missing-field: " + field);
}

bool parse_finite(const std::string& text, double* out) {
  const char* begin = text.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin) return false;
  while (*end != '\0' && std::isspace(static_cast<unsigned char>(*end))) ++end;
  if (*end != '\0') return false;
  *out = v;
  return std::isfinite(v);
}

bool get_int(const ojson& v, std::int64_t* out) {
  if (v.is_number_integer()) {
    *out = v.get<std::int64_t>();
    return true;
  }
  return false;
}

Expected<Item, ParseError> parse_item(const ojson& j, const std::string& loc) {
  if (!j.is_object()) return field_error("bad-type", loc, loc + " must be an object");
  Item item;
  if (!j.contains("item_id")) return missing_field(loc + ".item_id");
  if (!get_int(j.at("item_id"), &item.item_id))
    return field_error("bad-type", loc + ".item_id", loc + ".item_id must be an integer");
  if (!j.contains("label")) return missing_field(loc + ".label");
  if (!j.at("label").is_string())
    return field_error("bad-type", loc + ".label", loc + ".label must be a string");
  item.label = j.at("label").get<std::string>();
  if (j.contains("attributes")) {
    const ojson& attrs = j.at("attributes");
    if (!attrs.is_array())
      return field_error("bad-type", loc + ".attributes", loc + ".attributes must be an array");
    for (const ojson& a : attrs) {
      if (!a.is_string())
        return field_error("bad-type", loc + ".attributes",
                           loc + ".attributes entries must be strings");
      item.attributes.push_back(a.get<std::string>());
    }
  }
  if (j.contains("global_item_id") && !j.at("global_item_id").is_null()) {
    std::int64_t gid = 0;
    if (!get_int(j.at("global_item_id"), &gid))
      return field_error("bad-type", loc + ".global_item_id",
                         loc + ".global_item_id must be an integer");
    item.global_item_id = gid;
  }
  static const std::unordered_set<std::string> known = {"item_id", "label", "attributes",
                                                        "global_item_id"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) item.extra.push_back({key, value.dump()});
  }
  return item;
}

Expected<Relation, ParseError> parse_relation(const ojson& j, const std::string& loc) {
  if (!j.is_object()) return field_error("bad-type", loc, loc + " must be an object");
  Relation rel;
  struct IntField {
    const char* name;
    std::int64_t* dest;
  };
  for (const IntField& f :
       {IntField{"triple_id", &rel.triple_id}, IntField{"item1", &rel.item1},
        IntField{"item2", &rel.item2}}) {
    if (!j.contains(f.name)) return missing_field(loc + "." + f.name);
    if (!get_int(j.at(f.name), f.dest))
      return field_error("bad-type", loc + "." + f.name,
                         loc + "." + f.name + " must be an integer");
  }
  if (!j.contains("relation")) return missing_field(loc + ".relation");
  if (!j.at("relation").is_string())
    return field_error("bad-type", loc + ".relation", loc + ".relation must be a string");
  rel.relation = j.at("relation").get<std::string>();
  if (j.contains("global_relation_id") && !j.at("global_relation_id").is_null()) {
    std::int64_t gid = 0;
    if (!get_int(j.at("global_relation_id"), &gid))
      return field_error("bad-type", loc + ".global_relation_id",
                         loc + ".global_relation_id must be an integer");
    rel.global_relation_id = gid;
  }
  static const std::unordered_set<std::string> known = {"triple_id", "item1", "relation", "item2",
                                                        "global_relation_id"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) rel.extra.push_back({key, value.dump()});
  }
  return rel;
}

Expected<SceneGraph, ParseError> parse_graph_object(const ojson& doc) {
  SceneGraph graph;
  if (!doc.contains("items")) return missing_field("items");
  if (!doc.at("items").is_array())
    return field_error("bad-type", "items", "items must be an array");
  std::size_t i = 0;
  for (const ojson& ij : doc.at("items")) {
    auto item = parse_item(ij, "items[" + std::to_string(i) + "]");
    if (!item) return item.error();
    graph.items.push_back(std::move(item.value()));
    ++i;
  }
  if (doc.contains("relations")) {
    if (!doc.at("relations").is_array())
      return field_error("bad-type", "relations", "relations must be an array");
    std::size_t r = 0;
    for (const ojson& rj : doc.at("relations")) {
      auto rel = parse_relation(rj, "relations[" + std::to_string(r) + "]");
      if (!rel) return rel.error();
      graph.relations.push_back(std::move(rel.value()));
      ++r;
    }
  }
  return graph;
}

Expected<ojson, ParseError> parse_document(std::string_view text) {
  try {
    return ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    ParseError err;
    err.code = "syntax";
    err.message = e.what();
    err.byte_offset = e.byte;
    return err;
  }
}

ojson item_to_json(const Item& item) {
  ojson j;
  j["item_id"] = item.item_id;
  j["label"] = item.label;
  j["attributes"] = item.attributes;
  if (item.global_item_id) j["global_item_id"] = *item.global_item_id;
  for (const ExtraField& e : item.extra) j[e.key] = ojson::parse(e.value_json);
  return j;
}

ojson relation_to_json(const Relation& rel) {
  ojson j;
  j["triple_id"] = rel.triple_id;
  j["item1"] = rel.item1;
  j["relation"] = rel.relation;
  j["item2"] = rel.item2;
  if (rel.global_relation_id) j["global_relation_id"] = *rel.global_relation_id;
  for (const ExtraField& e : rel.extra) j[e.key] = ojson::parse(e.value_json);
  return j;
}

ojson graph_fields_to_json(const SceneGraph& graph) {
  ojson j;
  j["items"] = ojson::array();
  for (const Item& item : graph.items) j["items"].push_back(item_to_json(item));
  j["relations"] = ojson::array();
  for (const Relation& rel : graph.relations) j["relations"].push_back(relation_to_json(rel));
  return j;
}

}  // namespace

Expected<DatasetRecord, ParseError> parse_record(std::string_view text) {
  auto doc = parse_document(text);
  if (!doc) return doc.error();
  if (!doc->is_object())
    return field_error("bad-type", "", "record must be a JSON object");

  DatasetRecord rec;
  const ojson& j = *doc;

  if (!j.contains("img_id")) return missing_field("img_id");
  if (!j.at("img_id").is_string())
    return field_error("bad-type", "img_id", "img_id must be a string");
  rec.img_id = j.at("img_id").get<std::string>();

  auto get_string = [&](const char* key, std::string* dest) -> std::optional<ParseError> {
    if (!j.contains(key)) return std::nullopt;
    if (!j.at(key).is_string())
      return field_error("bad-type", key, std::string(key) + " must be a string");
    *dest = j.at(key).get<std::string>();
    return std::nullopt;
  };
  for (auto [key, dest] : {std::pair{"name", &rec.name}, std::pair{"caption_ori", &rec.caption_ori},
                           std::pair{"url", &rec.url}}) {
    if (auto err = get_string(key, dest)) return *err;
  }

  if (j.contains("score")) {
    const ojson& s = j.at("score");
    if (s.is_string()) {
      rec.score_text = s.get<std::string>();
    } else if (s.is_number()) {
      rec.score_text = s.dump();
    } else {
      return field_error("bad-type", "score", "score must be a decimal string or number");
    }
    if (!parse_finite(rec.score_text, &rec.score)) {
      rec.score = std::nan("");
    }
  } else {
    rec.score_text = "0";
    rec.score = 0.0;
  }

  auto graph = parse_graph_object(j);
  if (!graph) return graph.error();
  rec.graph = std::move(graph.value());

  static const std::unordered_set<std::string> known = {
      "img_id", "name", "caption_ori", "score", "url", "items", "relations"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) rec.extra.push_back({key, value.dump()});
  }
  return rec;
}

Expected<SceneGraph, ParseError> parse_graph(std::string_view text) {
  auto doc = parse_document(text);
  if (!doc) return doc.error();
  if (!doc->is_object())
    return field_error("bad-type", "", "graph must be a JSON object");
  return parse_graph_object(*doc);
}

std::string serialize_record(const DatasetRecord& record) {
  ojson j;
  j["img_id"] = record.img_id;
  j["name"] = record.name;
  j["caption_ori"] = record.caption_ori;
  j["score"] = record.score_text;
  j["url"] = record.url;
  ojson graph = graph_fields_to_json(record.graph);
  j["items"] = std::move(graph["items"]);
  j["relations"] = std::move(graph["relations"]);
  for (const ExtraField& e : record.extra) j[e.key] = ojson::parse(e.value_json);
  return j.dump();
}

std::string serialize_graph(const SceneGraph& graph) {
  return graph_fields_to_json(graph).dump();
}

namespace {

// Incremental top-level scanner: finds balanced {...} object texts in a byte
// span while ignoring array brackets, commas and whitespace between them.
// Keeps only one record text in memory at a time.
class RecordScanner {
 public:
  RecordScanner(IngestStats& stats, const RecordConsumer& on_record,
                const ErrorConsumer& on_error, std::size_t base_offset = 0)
      : stats_(stats), on_record_(on_record), on_error_(on_error), total_(base_offset) {}

  void feed(const char* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) push(data[i]);
  }

  void finish() {
    if (collecting_) {
      ParseError err;
      err.code = "syntax";
      err.message = "unexpected end of input inside a record";
      err.byte_offset = record_start_;
      report(err, record_start_);
    }
  }

 private:
  void push(char c) {
    std::size_t offset = total_++;
    if (collecting_) {
      current_.push_back(c);
      if (in_string_) {
        if (escaped_) {
          escaped_ = false;
        } else if (c == '\\') {
          escaped_ = true;
        } else if (c == '"') {
          in_string_ = false;
        }
        return;
      }
      if (c == '"') {
        in_string_ = true;
      } else if (c == '{') {
        ++depth_;
      } else if (c == '}') {
        if (--depth_ == 0) {
          dispatch();
        }
      }
      return;
    }
    if (skipping_garbage_) {
      if (c == '\n') {
        skipping_garbage_ = false;
        return;
      }
      if (c != '{') return;
      skipping_garbage_ = false;
      // fall through: '{' starts a record
    }
    if (c == '{') {
      collecting_ = true;
      depth_ = 1;
      in_string_ = false;
      escaped_ = false;
      current_.assign(1, '{');
      record_start_ = offset;
      return;
    }
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == '[' || c == ']') {
      return;
    }
    ParseError err;
    err.code = "syntax";
    err.message = std::string("unexpected character '") + c + "' between records";
    err.byte_offset = offset;
    report(err, offset);
    skipping_garbage_ = true;
  }

  void dispatch() {
    collecting_ = false;
    auto rec = parse_record(current_);
    if (rec.ok()) {
      ++stats_.records_ok;
      if (on_record_) on_record_(std::move(rec.value()));
    } else {
      report(rec.error(), record_start_);
    }
    current_.clear();
  }

  void report(const ParseError& err, std::size_t offset) {
    ++stats_.records_failed;
    if (stats_.first_error_locations.size() < kMaxRecordedErrors) {
      stats_.first_error_locations.emplace_back(offset, err.message);
    }
    if (on_error_) on_error_(err);
  }

  IngestStats& stats_;
  const RecordConsumer& on_record_;
  const ErrorConsumer& on_error_;
  std::string current_;
  std::size_t total_ = 0;
  std::size_t record_start_ = 0;
  int depth_ = 0;
  bool collecting_ = false;
  bool in_string_ = false;
  bool escaped_ = false;
  bool skipping_garbage_ = false;
};

}  // namespace

// Container detection: a stream opening with '[' is one JSON array whose
// elements may be pretty-printed across lines; anything else is treated as
// line-delimited (.jsonl, or compact objects concatenated on a line), where
// a torn record can only poison its own line.
IngestStats stream_records(std::istream& source, const RecordConsumer& on_record,
                           const ErrorConsumer& on_error) {
  IngestStats stats;
  std::size_t base = 0;
  int first = source.peek();
  while (first != std::istream::traits_type::eof() &&
         std::isspace(static_cast<unsigned char>(first))) {
    source.get();
    ++base;
    first = source.peek();
  }
  if (first == std::istream::traits_type::eof()) return stats;

  if (first == '[') {
    RecordScanner scanner(stats, on_record, on_error, base);
    char buf[1 << 16];
    while (source.read(buf, sizeof(buf)), source.gcount() > 0) {
      scanner.feed(buf, static_cast<std::size_t>(source.gcount()));
      if (source.bad()) break;
    }
    if (source.bad()) {
      stats.io_failed = true;
      stats.io_error = "read failure on input stream";
      return stats;
    }
    scanner.finish();
    return stats;
  }

  std::string line;
  while (std::getline(source, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool blank = line.find_first_not_of(" \t") == std::string::npos;
    if (!blank) {
      RecordScanner scanner(stats, on_record, on_error, base);
      scanner.feed(line.data(), line.size());
      scanner.finish();
    }
    base += line.size() + 1;
  }
  if (source.bad()) {
    stats.io_failed = true;
    stats.io_error = "read failure on input stream";
  }
  return stats;
}

IngestStats stream_records_file(const std::string& path, const RecordConsumer& on_record,
                                const ErrorConsumer& on_error) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    IngestStats stats;
    stats.io_failed = true;
    stats.io_error = "cannot open " + path;
    return stats;
  }
  return stream_records(in, on_record, on_error);
}

std::vector<DatasetRecord> load_records(const std::string& path) {
  std::vector<DatasetRecord> out;
  IngestStats stats =
      stream_records_file(path, [&](DatasetRecord&& r) { out.push_back(std::move(r)); });
  if (stats.io_failed) throw std::runtime_error(stats.io_error);
  return out;
}

Expected<SplitResult, SplitError> split_dataset(std::vector<std::string> ids,
                                                const SplitSpec& spec) {
  if (spec.total() > ids.size()) {
    return SplitError{"split sizes (" + std::to_string(spec.total()) +
                      ") exceed corpus size (" + std::to_string(ids.size()) + ")"};
  }
  std::sort(ids.begin(), ids.end());
  SplitMix64 rng{spec.seed};
  for (std::size_t i = ids.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.bounded(i));
    std::swap(ids[i - 1], ids[j]);
  }
  SplitResult out;
  auto it = ids.begin();
  out.train.assign(it, it + static_cast<std::ptrdiff_t>(spec.train_count));
  it += static_cast<std::ptrdiff_t>(spec.train_count);
  out.val.assign(it, it + static_cast<std::ptrdiff_t>(spec.val_count));
  it += static_cast<std::ptrdiff_t>(spec.val_count);
  out.test.assign(it, it + static_cast<std::ptrdiff_t>(spec.test_count));
  return out;
}

void write_id_list(const std::string& path, const std::vector<std::string>& ids) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const std::string& id : ids) out << id << '\n';
  if (!out) throw std::runtime_error("write failure: " + path);
}

std::vector<std::string> read_id_list(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

}  // namespace sgkit
