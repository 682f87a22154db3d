#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sgkit/model.hpp"
#include "sgkit/rng.hpp"

#ifndef SGKIT_TEST_DATA_DIR
#define SGKIT_TEST_DATA_DIR "tests/data"
#endif

namespace sgkit::test {

inline std::string data_path(const std::string& name) {
  return std::string(SGKIT_TEST_DATA_DIR) + "/" + name;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open fixture: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw std::runtime_error("cannot write: " + path);
}

// Fresh per-test scratch directory under the system temp dir.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("sgkit-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline const std::vector<std::string>& word_pool() {
  static const std::vector<std::string> kWords = {
      "person", "tree",   "car",    "house",  "dog",     "mountain", "river", "cloud",
      "street", "window", "flower", "bridge", "boat",    "lantern",  "chair", "table",
      "tall",   "small",  "bright", "old",    "wooden",  "serene",   "vivid", "rustic",
      "holding","riding", "beside", "under",  "leaning on", "surrounded by", "adorn",
      "span over", "standing on", "grown by"};
  return kWords;
}

inline std::string random_phrase(SplitMix64& rng, std::size_t max_words) {
  std::size_t n = 1 + rng.bounded(max_words);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) out += ' ';
    out += word_pool()[rng.bounded(word_pool().size())];
  }
  return out;
}

// Valid random graph: unique ids, resolvable references. Attribute and
// relation counts are small enough for brute-force oracles.
inline SceneGraph make_random_graph(SplitMix64& rng, std::size_t max_items = 20,
                                    std::size_t max_relations = 12) {
  SceneGraph graph;
  std::size_t n_items = 1 + rng.bounded(max_items);
  for (std::size_t i = 0; i < n_items; ++i) {
    Item item;
    // unique ids with gaps: slot i draws from [3i, 3i+2]
    item.item_id = static_cast<std::int64_t>(i * 3 + rng.bounded(3));
    item.label = word_pool()[rng.bounded(16)];
    std::size_t n_attrs = rng.bounded(4);  // may be zero (lenient corpus)
    for (std::size_t a = 0; a < n_attrs; ++a) {
      item.attributes.push_back(word_pool()[16 + rng.bounded(8)]);
    }
    graph.items.push_back(std::move(item));
  }
  std::size_t n_rel = rng.bounded(max_relations + 1);
  for (std::size_t r = 0; r < n_rel; ++r) {
    Relation rel;
    rel.triple_id = static_cast<std::int64_t>(r);
    rel.item1 = graph.items[rng.bounded(graph.items.size())].item_id;
    rel.item2 = graph.items[rng.bounded(graph.items.size())].item_id;
    rel.relation = random_phrase(rng, 3);
    graph.relations.push_back(std::move(rel));
  }
  return graph;
}

inline DatasetRecord make_random_record(SplitMix64& rng, std::size_t index) {
  DatasetRecord rec;
  rec.img_id = std::to_string(100000 + index);
  rec.name = "img_" + std::to_string(index) + ".jpg";
  rec.caption_ori = random_phrase(rng, 12);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12f", 6.5 + rng.unit() * 2.0);
  rec.score_text = buf;
  rec.score = std::strtod(buf, nullptr);
  rec.url = "https://example.invalid/" + rec.img_id;
  rec.graph = make_random_graph(rng, 12, 8);
  return rec;
}

}  // namespace sgkit::test
