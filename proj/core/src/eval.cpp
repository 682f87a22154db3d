#include "sgkit/eval.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "sgkit/annotate.hpp"
#include "sgkit/io.hpp"

namespace sgkit {

namespace {
// Non-printing separator so a label containing spaces or '|' cannot
// collide with a different triple.
constexpr char kSep = '\x1f';
}  // namespace

std::string TripleKey::joined() const {
  std::string out = subject_label;
  out += kSep;
  out += relation_phrase;
  out += kSep;
  out += object_label;
  return out;
}

Multiset entity_list(const SceneGraph& graph) {
  Multiset out;
  for (const Item& item : graph.items) ++out[canonical_text(item.label)];
  return out;
}

Multiset relation_list(const SceneGraph& graph) {
  Multiset out;
  for (const Relation& rel : graph.relations) ++out[canonical_text(rel.relation)];
  return out;
}

Expected<Multiset, GraphError> sg_list(const SceneGraph& graph) {
  auto resolved = triples(graph);
  if (!resolved) return resolved.error();
  Multiset out;
  for (const ResolvedTriple& t : resolved.value()) {
    TripleKey key{canonical_text(t.subject.label), canonical_text(t.relation),
                  canonical_text(t.object.label)};
    ++out[key.joined()];
  }
  return out;
}

double iou(const Multiset& a, const Multiset& b) {
  std::uint64_t sum_min = 0;
  std::uint64_t sum_max = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
      sum_max += ia->second;
      ++ia;
    } else if (ia == a.end() || ib->first < ia->first) {
      sum_max += ib->second;
      ++ib;
    } else {
      sum_min += std::min(ia->second, ib->second);
      sum_max += std::max(ia->second, ib->second);
      ++ia;
      ++ib;
    }
  }
  if (sum_max == 0) return 1.0;  // both empty
  return static_cast<double>(sum_min) / static_cast<double>(sum_max);
}

Expected<IoUReport, GraphError> iou_report(const SceneGraph& predicted,
                                           const SceneGraph& reference) {
  auto pred_sg = sg_list(predicted);
  if (!pred_sg) return pred_sg.error();
  auto ref_sg = sg_list(reference);
  if (!ref_sg) return ref_sg.error();
  IoUReport report;
  report.sg_iou = iou(pred_sg.value(), ref_sg.value());
  report.entity_iou = iou(entity_list(predicted), entity_list(reference));
  report.relation_iou = iou(relation_list(predicted), relation_list(reference));
  return report;
}

BenchManifest select_complex(const std::vector<DatasetRecord>& records, std::uint64_t threshold,
                             std::string source_split) {
  BenchManifest manifest;
  manifest.threshold = threshold;
  manifest.source_split = std::move(source_split);
  manifest.scanned = records.size();
  for (const DatasetRecord& r : records) {
    if (r.graph.relations.size() > threshold) manifest.img_ids.push_back(r.img_id);
  }
  return manifest;
}

void write_bench_manifest(const std::string& path, const BenchManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "# threshold: " << manifest.threshold << "\n";
  out << "# selected: " << manifest.img_ids.size() << "\n";
  out << "# scanned: " << manifest.scanned << "\n";
  if (!manifest.source_split.empty()) out << "# source_split: " << manifest.source_split << "\n";
  for (const std::string& id : manifest.img_ids) out << id << "\n";
  if (!out) throw std::runtime_error("write failure: " + path);
}

BenchManifest read_bench_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  BenchManifest manifest;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream header(line.substr(1));
      std::string key;
      header >> key;
      if (key == "threshold:") header >> manifest.threshold;
      else if (key == "scanned:") header >> manifest.scanned;
      else if (key == "source_split:") header >> manifest.source_split;
      continue;
    }
    manifest.img_ids.push_back(line);
  }
  return manifest;
}

std::string extraction_prompt() {
  PromptConfig config = default_prompt_config();
  std::string prompt =
      "Extract the scene graph of this image: list every visible object, its "
      "attributes, and the relations between objects.\n\n";
  prompt += "1. " + config.rule_texts.front() + "\n\n";
  prompt += config.output_format_instructions;
  return prompt;
}

Expected<SceneGraph, ExtractionError> extract_sg_from_image(const std::string& image_ref,
                                                            ChatClient& client) {
  auto reply = client.complete(extraction_prompt(), image_ref);
  if (!reply) {
    return ExtractionError{reply.error().code, reply.error().message, {}};
  }
  auto graph = parse_llm_response(reply.value());
  if (!graph) {
    return ExtractionError{graph.error().code, graph.error().message, graph.error().report};
  }
  return graph.value();
}

Expected<IoUReport, ClientError> annotation_accuracy_protocol(const DatasetRecord& record,
                                                              ImageGenClient& generator,
                                                              ChatClient& extractor,
                                                              AccuracyVariant variant) {
  const std::string prompt =
      variant == AccuracyVariant::caption ? record.caption_ori : serialize_graph(record.graph);
  auto generated_ref = generator.generate(prompt);
  if (!generated_ref) return generated_ref.error();

  auto generated_sg = extract_sg_from_image(generated_ref.value(), extractor);
  if (!generated_sg) {
    return ClientError{generated_sg.error().code,
                       "extraction from generated image failed: " + generated_sg.error().message};
  }
  auto reference_sg = extract_sg_from_image(record.url, extractor);
  if (!reference_sg) {
    return ClientError{reference_sg.error().code,
                       "extraction from ground-truth image failed: " +
                           reference_sg.error().message};
  }
  auto report = iou_report(generated_sg.value(), reference_sg.value());
  if (!report) return ClientError{"metric", report.error().message};
  return report.value();
}

AccuracyBatchResult annotation_accuracy_batch(const std::vector<DatasetRecord>& records,
                                              ImageGenClient& generator, ChatClient& extractor,
                                              AccuracyVariant variant) {
  AccuracyBatchResult result;
  double sg = 0, entity = 0, relation = 0;
  for (const DatasetRecord& record : records) {
    auto report = annotation_accuracy_protocol(record, generator, extractor, variant);
    if (!report) {
      ++result.failures;
      result.skipped.emplace_back(record.img_id, report.error().message);
      continue;
    }
    ++result.successes;
    sg += report->sg_iou;
    entity += report->entity_iou;
    relation += report->relation_iou;
    result.per_record.emplace_back(record.img_id, report.value());
  }
  if (result.successes > 0) {
    double n = static_cast<double>(result.successes);
    result.average = {sg / n, entity / n, relation / n};
  }
  return result;
}

}  // namespace sgkit
