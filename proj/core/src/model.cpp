#include "sgkit/model.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

namespace sgkit {

namespace {

std::string loc_items(std::size_t i) { return "items[" + std::to_string(i) + "]"; }
std::string loc_relations(std::size_t i) { return "relations[" + std::to_string(i) + "]"; }

bool blank_after_trim(std::string_view s) {
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

void sort_issues(std::vector<ValidationIssue>& v) {
  std::sort(v.begin(), v.end(), [](const ValidationIssue& a, const ValidationIssue& b) {
    return std::tie(a.location, a.rule, a.message) < std::tie(b.location, b.rule, b.message);
  });
}

}  // namespace

ValidationReport validate_graph(const SceneGraph& graph, ValidationMode mode) {
  ValidationReport report;
  auto error = [&](const char* rule, std::string loc, std::string msg) {
    report.errors.push_back({rule, std::move(loc), std::move(msg)});
  };
  auto warning = [&](const char* rule, std::string loc, std::string msg) {
    report.warnings.push_back({rule, std::move(loc), std::move(msg)});
  };

  std::unordered_set<std::int64_t> item_ids;
  std::unordered_set<std::int64_t> dup_item_ids;
  for (std::size_t i = 0; i < graph.items.size(); ++i) {
    const Item& item = graph.items[i];
    if (item.item_id < 0) {
      error(rules::kNegativeId, loc_items(i), "item_id must be non-negative");
    }
    if (!item_ids.insert(item.item_id).second) {
      dup_item_ids.insert(item.item_id);
      error(rules::kDupItemId, loc_items(i),
            "item_id " + std::to_string(item.item_id) + " already used");
    }
    if (blank_after_trim(item.label)) {
      error(rules::kEmptyLabel, loc_items(i), "label is empty after trimming");
    }
    if (item.attributes.empty()) {
      std::string msg = "object has no attribute";
      if (mode == ValidationMode::strict) {
        error(rules::kNoAttribute, loc_items(i), std::move(msg));
      } else {
        warning(rules::kNoAttribute, loc_items(i), std::move(msg));
      }
    }
    std::set<std::string> seen_attrs;
    for (std::size_t a = 0; a < item.attributes.size(); ++a) {
      const std::string& attr = item.attributes[a];
      if (blank_after_trim(attr)) {
        error(rules::kEmptyAttribute, loc_items(i),
              "attribute " + std::to_string(a) + " is empty after trimming");
      } else if (!seen_attrs.insert(canonical_text(attr)).second) {
        warning(rules::kDuplicateAttribute, loc_items(i),
                "attribute \"" + attr + "\" repeated on one item");
      }
    }
  }

  std::unordered_set<std::int64_t> triple_ids;
  std::set<std::tuple<std::int64_t, std::string, std::int64_t>> triple_keys;
  for (std::size_t i = 0; i < graph.relations.size(); ++i) {
    const Relation& rel = graph.relations[i];
    if (rel.triple_id < 0) {
      error(rules::kNegativeId, loc_relations(i), "triple_id must be non-negative");
    }
    if (!triple_ids.insert(rel.triple_id).second) {
      error(rules::kDupTripleId, loc_relations(i),
            "triple_id " + std::to_string(rel.triple_id) + " already used");
    }
    if (blank_after_trim(rel.relation)) {
      error(rules::kEmptyRelation, loc_relations(i), "relation phrase is empty after trimming");
    }
    for (std::int64_t endpoint : {rel.item1, rel.item2}) {
      if (!item_ids.count(endpoint)) {
        error(rules::kDanglingRef, loc_relations(i),
              "referenced item " + std::to_string(endpoint) + " does not exist");
      }
    }
    if (rel.item1 == rel.item2) {
      warning(rules::kSelfRelation, loc_relations(i),
              "relation links item " + std::to_string(rel.item1) + " to itself");
    }
    auto key = std::make_tuple(rel.item1, canonical_text(rel.relation), rel.item2);
    if (!triple_keys.insert(key).second) {
      warning(rules::kDuplicateTriple, loc_relations(i),
              "duplicate (item1, relation, item2) triple");
    }
  }

  sort_issues(report.errors);
  sort_issues(report.warnings);
  return report;
}

ValidationReport validate(const DatasetRecord& record, ValidationMode mode) {
  ValidationReport report = validate_graph(record.graph, mode);
  auto error = [&](const char* rule, std::string msg) {
    report.errors.push_back({rule, "record", std::move(msg)});
  };

  if (record.img_id.empty()) {
    error(rules::kEmptyImgId, "img_id is empty");
  }
  if (!std::isfinite(record.score)) {
    error(rules::kBadScore, "score is not a finite decimal: \"" + record.score_text + "\"");
  } else if (mode == ValidationMode::strict && !(record.score > 6.5)) {
    error(rules::kLowScore, "aesthetic score " + record.score_text + " not above 6.5");
  }

  sort_issues(report.errors);
  sort_issues(report.warnings);
  return report;
}

Expected<std::vector<ResolvedTriple>, GraphError> triples(const SceneGraph& graph) {
  std::unordered_map<std::int64_t, const Item*> by_id;
  for (const Item& item : graph.items) by_id.emplace(item.item_id, &item);

  std::vector<const Relation*> ordered;
  ordered.reserve(graph.relations.size());
  for (const Relation& rel : graph.relations) ordered.push_back(&rel);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Relation* a, const Relation* b) { return a->triple_id < b->triple_id; });

  std::vector<ResolvedTriple> out;
  out.reserve(ordered.size());
  for (const Relation* rel : ordered) {
    auto subj = by_id.find(rel->item1);
    auto obj = by_id.find(rel->item2);
    if (subj == by_id.end() || obj == by_id.end()) {
      std::int64_t missing = subj == by_id.end() ? rel->item1 : rel->item2;
      return GraphError{"dangling-ref",
                        "triple " + std::to_string(rel->triple_id) + " references missing item " +
                            std::to_string(missing),
                        rel->triple_id};
    }
    out.push_back({rel->triple_id, *subj->second, rel->relation, *obj->second});
  }
  return out;
}

std::vector<Item> single_objects(const SceneGraph& graph) {
  std::unordered_set<std::int64_t> linked;
  for (const Relation& rel : graph.relations) {
    linked.insert(rel.item1);
    linked.insert(rel.item2);
  }
  std::vector<Item> out;
  for (const Item& item : graph.items) {
    if (!linked.count(item.item_id)) out.push_back(item);
  }
  std::sort(out.begin(), out.end(),
            [](const Item& a, const Item& b) { return a.item_id < b.item_id; });
  return out;
}

std::size_t annotation_length(const SceneGraph& graph) {
  std::size_t n = graph.items.size() + graph.relations.size();
  for (const Item& item : graph.items) n += item.attributes.size();
  return n;
}

std::string canonical_text(std::string_view text) {
  UErrorCode ec = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(ec);
  icu::UnicodeString us =
      icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int>(text.size())));
  if (nfc != nullptr && U_SUCCESS(ec)) {
    us = nfc->normalize(us, ec);
  }
  us.toLower(icu::Locale::getRoot());

  icu::UnicodeString collapsed;
  bool pending_space = false;
  bool seen_content = false;
  for (int i = 0; i < us.length();) {
    UChar32 c = us.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      pending_space = seen_content;
      continue;
    }
    if (pending_space) {
      collapsed.append(static_cast<UChar32>(' '));
      pending_space = false;
    }
    collapsed.append(c);
    seen_content = true;
  }

  std::string out;
  collapsed.toUTF8String(out);
  return out;
}

SceneGraph canonicalize(const SceneGraph& graph) {
  SceneGraph out = graph;
  for (Item& item : out.items) {
    item.label = canonical_text(item.label);
    for (std::string& attr : item.attributes) attr = canonical_text(attr);
  }
  for (Relation& rel : out.relations) rel.relation = canonical_text(rel.relation);
  return out;
}

}  // namespace sgkit
