#pragma once

#include <string>

#include "sgkit/io.hpp"
#include "sgkit/model.hpp"
#include "sgkit/rng.hpp"

namespace sgkit::bench {

// Deterministic record of moderate size (a handful of items/relations).
inline SceneGraph sample_graph(std::uint64_t seed) {
  SplitMix64 rng{seed};
  static const char* labels[] = {"person", "tree",  "car",   "house", "dog",
                                 "river",  "cloud", "chair", "boat",  "street"};
  static const char* attrs[] = {"tall", "small", "bright", "old", "serene", "vivid"};
  static const char* verbs[] = {"holding", "standing on", "surrounded by", "leaning on"};
  SceneGraph g;
  std::size_t n_items = 3 + rng.bounded(6);
  for (std::size_t i = 0; i < n_items; ++i) {
    Item item;
    item.item_id = static_cast<std::int64_t>(i);
    item.label = labels[rng.bounded(10)];
    item.attributes.push_back(attrs[rng.bounded(6)]);
    if (rng.bounded(2) == 0) item.attributes.push_back(attrs[rng.bounded(6)]);
    g.items.push_back(std::move(item));
  }
  std::size_t n_rel = 2 + rng.bounded(5);
  for (std::size_t r = 0; r < n_rel; ++r) {
    Relation rel;
    rel.triple_id = static_cast<std::int64_t>(r);
    rel.item1 = static_cast<std::int64_t>(rng.bounded(n_items));
    rel.item2 = static_cast<std::int64_t>(rng.bounded(n_items));
    rel.relation = verbs[rng.bounded(4)];
    g.relations.push_back(std::move(rel));
  }
  return g;
}

inline std::string sample_record_text(std::uint64_t seed) {
  DatasetRecord rec;
  rec.img_id = std::to_string(400000 + seed % 100000);
  rec.name = rec.img_id + ".jpg";
  rec.caption_ori = "a benchmark caption with a handful of ordinary words in it";
  rec.score_text = "6.720815181732178";
  rec.score = 6.720815181732178;
  rec.url = "https://example.invalid/" + rec.img_id;
  rec.graph = sample_graph(seed);
  return serialize_record(rec);
}

}  // namespace sgkit::bench
