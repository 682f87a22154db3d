#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "sgkit/encoder.hpp"
#include "test_helpers.hpp"

using namespace sgkit;

namespace {

SceneGraph rainbow_graph() {
  SceneGraph g;
  g.items.push_back({0, "rainbow", {"colorful", "arc-shaped"}, std::nullopt, {}});
  g.items.push_back({4, "valley", {"green", "vast"}, std::nullopt, {}});
  g.relations.push_back({0, 0, "span over", 4, std::nullopt, {}});
  return g;
}

// Small graphs whose lowering stays within the desk-scale node budget.
SceneGraph small_random_graph(SplitMix64& rng) {
  SceneGraph g;
  std::size_t n_items = 2 + rng.bounded(2);  // 2..3 items
  std::size_t attr_budget = 8 - n_items;     // lowered nodes = items + attrs
  for (std::size_t i = 0; i < n_items; ++i) {
    Item item;
    item.item_id = static_cast<std::int64_t>(2 * i + rng.bounded(2));
    item.label = test::word_pool()[rng.bounded(8)];
    if (attr_budget > 0 && rng.bounded(2) == 0) {
      item.attributes.push_back(test::word_pool()[16 + rng.bounded(8)]);
      --attr_budget;
    }
    g.items.push_back(std::move(item));
  }
  std::size_t n_rel = 1 + rng.bounded(2);
  for (std::size_t r = 0; r < n_rel; ++r) {
    Relation rel;
    rel.triple_id = static_cast<std::int64_t>(r);
    rel.item1 = g.items[rng.bounded(g.items.size())].item_id;
    rel.item2 = g.items[rng.bounded(g.items.size())].item_id;
    rel.relation = rng.bounded(2) == 0 ? "holding" : "leaning on";
    g.relations.push_back(std::move(rel));
  }
  return g;
}

Vec sub(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

double max_abs(const Vec& v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

struct ToyLossSetup {
  SceneGraph graph;
  HashEmbeddingBackend backend;
  EncoderParams params;
  ToyLinearDenoiser denoiser;
  LossConfig loss;
};

ToyLossSetup make_toy_setup(std::uint64_t seed, std::size_t dim = 6, std::size_t hidden = 5,
                            std::size_t layers = 2, std::size_t latent = 4) {
  SplitMix64 rng{seed};
  ToyLossSetup setup{small_random_graph(rng),
                     HashEmbeddingBackend(dim, 7),
                     EncoderParams::seeded(dim, hidden, layers, seed ^ 0xABCDEF),
                     ToyLinearDenoiser(latent, dim, seed ^ 0x1234),
                     {}};
  setup.params.alpha = 0.5 + rng.unit();  // exercise the refined path
  setup.loss.x0.resize(latent);
  setup.loss.eps.resize(latent);
  for (double& x : setup.loss.x0) x = rng.unit() * 2 - 1;
  for (double& x : setup.loss.eps) x = rng.unit() * 2 - 1;
  setup.loss.schedule = NoiseSchedule::linear(10, 0.99, 0.05);
  setup.loss.timestep = rng.bounded(10);
  return setup;
}

}  // namespace

TEST_CASE("hash backend is deterministic, unit-norm and collision-free") {
  HashEmbeddingBackend backend(32, 3);
  Vec a = backend.embed("span");
  Vec b = backend.embed("span");
  CHECK(a == b);

  double norm = 0;
  for (double x : a) norm += x * x;
  CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);

  std::set<std::string> seen;
  for (int i = 0; i < 1000; ++i) {
    Vec v = backend.embed("token-" + std::to_string(i));
    std::string bytes(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
    CHECK(seen.insert(bytes).second);
  }

  HashEmbeddingBackend other_seed(32, 4);
  CHECK(other_seed.embed("span") != a);
}

TEST_CASE("lower: one node per item, nothing else for a bare item") {
  HashEmbeddingBackend backend(8, 0);
  SceneGraph g;
  g.items.push_back({0, "tree", {}, std::nullopt, {}});
  auto lowered = lower(g, backend);
  REQUIRE(lowered.ok());
  CHECK(lowered->nodes.size() == 1);
  CHECK(lowered->edges.empty());
  CHECK(lowered->nodes[0].kind == NodeKind::object);
}

TEST_CASE("lower: one edge per relation word between the same node pair") {
  HashEmbeddingBackend backend(8, 0);
  SceneGraph g;
  g.items.push_back({0, "rainbow", {}, std::nullopt, {}});
  g.items.push_back({1, "valley", {}, std::nullopt, {}});
  g.relations.push_back({0, 0, "span over", 1, std::nullopt, {}});
  auto lowered = lower(g, backend);
  REQUIRE(lowered.ok());
  CHECK(lowered->nodes.size() == 2);
  REQUIRE(lowered->edges.size() == 2);  // "span", "over"
  CHECK(lowered->edges[0].src == lowered->edges[1].src);
  CHECK(lowered->edges[0].dst == lowered->edges[1].dst);
  CHECK(lowered->edges[0].word_index == 0);
  CHECK(lowered->edges[1].word_index == 1);
  CHECK(lowered->edges[0].feature == backend.embed("span"));
  CHECK(lowered->edges[1].feature == backend.embed("over"));
  REQUIRE(lowered->triple_index.count(0) == 1);
  CHECK(lowered->triple_index.at(0).edge_indices.size() == 2);
}

TEST_CASE("lower: attributes become nodes wired to their object") {
  HashEmbeddingBackend backend(8, 0);
  SceneGraph g;
  g.items.push_back({0, "valley", {"green", "vast"}, std::nullopt, {}});
  auto lowered = lower(g, backend);
  REQUIRE(lowered.ok());
  CHECK(lowered->nodes.size() == 3);  // object + 2 attribute nodes
  CHECK(lowered->edges.size() == 2);
  int attribute_nodes = 0;
  for (const LoweredNode& node : lowered->nodes) {
    if (node.kind == NodeKind::attribute) ++attribute_nodes;
  }
  CHECK(attribute_nodes == 2);
  for (const LoweredEdge& edge : lowered->edges) {
    CHECK(edge.kind == EdgeKind::attribute);
    CHECK(edge.src == 0);  // the object node
    CHECK(edge.feature == backend.embed(kAttributeEdgePhrase));
  }
}

TEST_CASE("lower rejects graphs that fail lenient validation") {
  HashEmbeddingBackend backend(8, 0);
  SceneGraph g;
  g.items.push_back({0, "a", {"x"}, std::nullopt, {}});
  g.relations.push_back({0, 0, "floats", 9, std::nullopt, {}});
  auto lowered = lower(g, backend);
  REQUIRE(!lowered.ok());
  CHECK(lowered.error().code == "dangling-ref");
}

TEST_CASE("lowering structure matches a direct recount on random graphs") {
  SplitMix64 rng{4242};
  HashEmbeddingBackend backend(8, 0);
  for (int i = 0; i < 100; ++i) {
    SceneGraph g = test::make_random_graph(rng, 10, 6);
    auto lowered = lower(g, backend);
    REQUIRE(lowered.ok());

    std::size_t expected_nodes = g.items.size();
    std::size_t expected_attr_edges = 0;
    for (const Item& item : g.items) {
      expected_nodes += item.attributes.size();
      expected_attr_edges += item.attributes.size();
    }
    std::size_t expected_word_edges = 0;
    for (const Relation& rel : g.relations) {
      std::size_t words = 0;
      bool in_word = false;
      for (char c : rel.relation) {
        bool ws = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!ws && !in_word) ++words;
        in_word = !ws;
      }
      expected_word_edges += words;
    }
    CHECK(lowered->nodes.size() == expected_nodes);
    CHECK(lowered->edges.size() == expected_attr_edges + expected_word_edges);
    CHECK(lowered->triple_index.size() == g.relations.size());
  }
}

TEST_CASE("gnn with all-zero weights is the identity") {
  HashEmbeddingBackend backend(8, 1);
  auto lowered = lower(rainbow_graph(), backend);
  REQUIRE(lowered.ok());
  EncoderParams zeros = EncoderParams::zeros(8, 6, 3);
  auto states = gnn_forward(*lowered, zeros);
  REQUIRE(states.ok());
  for (std::size_t v = 0; v < lowered->nodes.size(); ++v) {
    CHECK(states->node_states.back()[v] == lowered->nodes[v].feature);
  }
}

TEST_CASE("gnn is equivariant under item permutation") {
  HashEmbeddingBackend backend(8, 1);
  SceneGraph g = rainbow_graph();
  SceneGraph permuted = g;
  std::swap(permuted.items[0], permuted.items[1]);

  EncoderParams params = EncoderParams::seeded(8, 6, 2, 99);
  auto la = lower(g, backend);
  auto lb = lower(permuted, backend);
  REQUIRE(la.ok());
  REQUIRE(lb.ok());
  auto sa = gnn_forward(*la, params);
  auto sb = gnn_forward(*lb, params);
  REQUIRE(sa.ok());
  REQUIRE(sb.ok());

  // match nodes by (kind, item_id, attr_index)
  for (std::size_t va = 0; va < la->nodes.size(); ++va) {
    const LoweredNode& node = la->nodes[va];
    bool found = false;
    for (std::size_t vb = 0; vb < lb->nodes.size(); ++vb) {
      const LoweredNode& other = lb->nodes[vb];
      if (other.kind == node.kind && other.item_id == node.item_id &&
          other.attr_index == node.attr_index) {
        CHECK(sa->node_states.back()[va] == sb->node_states.back()[vb]);
        found = true;
        break;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("one gnn round on a 3-node path matches a step-by-step recomputation") {
  // items 0 -- 1 -- 2 with single-word relations; no attributes
  SceneGraph g;
  g.items.push_back({0, "a", {}, std::nullopt, {}});
  g.items.push_back({1, "b", {}, std::nullopt, {}});
  g.items.push_back({2, "c", {}, std::nullopt, {}});
  g.relations.push_back({0, 0, "left", 1, std::nullopt, {}});
  g.relations.push_back({1, 1, "right", 2, std::nullopt, {}});

  const std::size_t dim = 4, hidden = 3;
  HashEmbeddingBackend backend(dim, 2);
  EncoderParams params = EncoderParams::seeded(dim, hidden, 1, 7);
  auto lowered = lower(g, backend);
  REQUIRE(lowered.ok());
  auto states = gnn_forward(*lowered, params);
  REQUIRE(states.ok());

  // independent recomputation with plain loops
  auto message = [&](const Vec& neighbor, const Vec& edge) {
    Vec m(hidden);
    for (std::size_t r = 0; r < hidden; ++r) {
      double acc = params.layers[0].b_message[r];
      for (std::size_t c = 0; c < dim; ++c) {
        acc += params.layers[0].w_message[r * 2 * dim + c] * neighbor[c];
        acc += params.layers[0].w_message[r * 2 * dim + dim + c] * edge[c];
      }
      m[r] = acc;
    }
    return m;
  };
  auto update = [&](const Vec& h, const Vec& aggregate) {
    Vec out(dim);
    for (std::size_t r = 0; r < dim; ++r) {
      double acc = params.layers[0].b_update[r];
      for (std::size_t c = 0; c < hidden; ++c) {
        acc += params.layers[0].w_update[r * hidden + c] * aggregate[c];
      }
      out[r] = h[r] + std::tanh(acc);
    }
    return out;
  };

  Vec ha = backend.embed("a"), hb = backend.embed("b"), hc = backend.embed("c");
  Vec fl = backend.embed("left"), fr = backend.embed("right");

  // node 0: one incident edge (to 1, feature "left")
  Vec expect0 = update(ha, message(hb, fl));
  // node 1: edges to 0 ("left") and 2 ("right"), mean of two messages
  Vec m10 = message(ha, fl), m12 = message(hc, fr);
  Vec agg1(hidden);
  for (std::size_t k = 0; k < hidden; ++k) agg1[k] = (m10[k] + m12[k]) / 2.0;
  Vec expect1 = update(hb, agg1);
  // node 2: one incident edge (to 1, "right")
  Vec expect2 = update(hc, message(hb, fr));

  CHECK(max_abs(sub(states->node_states.back()[0], expect0)) < 1e-12);
  CHECK(max_abs(sub(states->node_states.back()[1], expect1)) < 1e-12);
  CHECK(max_abs(sub(states->node_states.back()[2], expect2)) < 1e-12);
}

TEST_CASE("refine_triples with zero weights is the mean of raw constituents") {
  const std::size_t dim = 8;
  HashEmbeddingBackend backend(dim, 1);
  SceneGraph g = rainbow_graph();
  auto lowered = lower(g, backend);
  REQUIRE(lowered.ok());
  EncoderParams zeros = EncoderParams::zeros(dim, 4, 2);
  auto states = gnn_forward(*lowered, zeros);
  REQUIRE(states.ok());
  auto refined = refine_triples(*lowered, *states);
  REQUIRE(refined.ok());

  Vec subject = backend.embed("rainbow");
  Vec object = backend.embed("valley");
  Vec w1 = backend.embed("span");
  Vec w2 = backend.embed("over");
  Vec expected(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    expected[d] = (subject[d] + object[d] + w1[d] + w2[d]) / 4.0;
  }
  CHECK(max_abs(sub(refined->at(0), expected)) < 1e-12);
}

TEST_CASE("refine_triples: identical constituent states collapse to that state") {
  // one item with a self-relation: subject == object state, edge feature
  // equal to the node feature via an identical label/word
  const std::size_t dim = 4;
  HashEmbeddingBackend backend(dim, 5);
  SceneGraph g;
  g.items.push_back({0, "echo", {}, std::nullopt, {}});
  g.relations.push_back({0, 0, "echo", 0, std::nullopt, {}});
  auto lowered = lower(g, backend);
  REQUIRE(lowered.ok());
  EncoderParams zeros = EncoderParams::zeros(dim, 4, 1);
  auto states = gnn_forward(*lowered, zeros);
  REQUIRE(states.ok());
  auto refined = refine_triples(*lowered, *states);
  REQUIRE(refined.ok());
  CHECK(max_abs(sub(refined->at(0), backend.embed("echo"))) < 1e-12);
}

TEST_CASE("assemble at alpha=0 equals the raw concatenation exactly") {
  SplitMix64 rng{606};
  const std::size_t dim = 16;
  HashEmbeddingBackend backend(dim, 9);
  for (int i = 0; i < 100; ++i) {
    SceneGraph g = test::make_random_graph(rng, 8, 5);
    EncoderParams params = EncoderParams::seeded(dim, 8, 2, rng.next());
    REQUIRE(params.alpha == 0.0);  // fresh params gate off the refinement
    auto embedding = assemble(g, backend, params);
    REQUIRE(embedding.ok());

    auto resolved = triples(g);
    REQUIRE(resolved.ok());
    std::vector<Item> singles = single_objects(g);
    REQUIRE(embedding->vectors.size() == resolved->size() + singles.size());
    CHECK(embedding->n_triples == resolved->size());

    for (std::size_t t = 0; t < resolved->size(); ++t) {
      Vec raw = backend.embed(render_triple_text((*resolved)[t]));
      CHECK(embedding->vectors[t] == raw);  // bitwise
      CHECK(embedding->tags[t].kind == ProvenanceTag::triple);
    }
    for (std::size_t s = 0; s < singles.size(); ++s) {
      CHECK(embedding->vectors[resolved->size() + s] == backend.embed(singles[s].label));
      CHECK(embedding->tags[resolved->size() + s].kind == ProvenanceTag::single);
      CHECK(embedding->tags[resolved->size() + s].id == singles[s].item_id);
    }
  }
}

TEST_CASE("assemble orders triples then singles with provenance tags") {
  HashEmbeddingBackend backend(8, 0);
  SceneGraph g = rainbow_graph();
  g.items.push_back({7, "cloud", {"white"}, std::nullopt, {}});
  g.relations.push_back({1, 4, "holds", 0, std::nullopt, {}});
  EncoderParams params = EncoderParams::zeros(8, 4, 1);
  auto embedding = assemble(g, backend, params);
  REQUIRE(embedding.ok());
  REQUIRE(embedding->vectors.size() == 3);  // 2 triples + 1 single
  CHECK(embedding->tags[0] == ProvenanceTag{ProvenanceTag::triple, 0});
  CHECK(embedding->tags[1] == ProvenanceTag{ProvenanceTag::triple, 1});
  CHECK(embedding->tags[2] == ProvenanceTag{ProvenanceTag::single, 7});
}

TEST_CASE("assemble with alpha=1 and zero weights adds the raw-feature means") {
  const std::size_t dim = 8;
  HashEmbeddingBackend backend(dim, 1);
  SceneGraph g = rainbow_graph();
  EncoderParams params = EncoderParams::zeros(dim, 4, 2);
  params.alpha = 1.0;
  auto embedding = assemble(g, backend, params);
  REQUIRE(embedding.ok());

  auto resolved = triples(g);
  REQUIRE(resolved.ok());
  Vec e_t = backend.embed(render_triple_text((*resolved)[0]));
  Vec subject = backend.embed("rainbow");
  Vec object = backend.embed("valley");
  Vec w1 = backend.embed("span");
  Vec w2 = backend.embed("over");
  for (std::size_t d = 0; d < dim; ++d) {
    double expected = e_t[d] + (subject[d] + object[d] + w1[d] + w2[d]) / 4.0;
    CHECK(embedding->vectors[0][d] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("triple text rendering includes attributes by default") {
  ResolvedTriple t;
  t.subject = {0, "rainbow", {"colorful", "arc-shaped"}, std::nullopt, {}};
  t.relation = "span over";
  t.object = {4, "valley", {"green", "vast"}, std::nullopt, {}};
  CHECK(render_triple_text(t) == "colorful arc-shaped rainbow span over green vast valley");
  AssembleOptions bare;
  bare.attributes_in_triple_text = false;
  CHECK(render_triple_text(t, bare) == "rainbow span over valley");
}

TEST_CASE("node permutation does not change assembled vectors") {
  SplitMix64 rng{77};
  const std::size_t dim = 8;
  HashEmbeddingBackend backend(dim, 3);
  for (int i = 0; i < 50; ++i) {
    SceneGraph g = test::make_random_graph(rng, 8, 5);
    SceneGraph permuted = g;
    for (std::size_t k = permuted.items.size(); k > 1; --k) {
      std::swap(permuted.items[k - 1], permuted.items[rng.bounded(k)]);
    }
    for (std::size_t k = permuted.relations.size(); k > 1; --k) {
      std::swap(permuted.relations[k - 1], permuted.relations[rng.bounded(k)]);
    }
    EncoderParams params = EncoderParams::seeded(dim, 6, 2, 1234);
    params.alpha = 0.75;
    auto a = assemble(g, backend, params);
    auto b = assemble(permuted, backend, params);
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    REQUIRE(a->vectors.size() == b->vectors.size());
    for (std::size_t k = 0; k < a->vectors.size(); ++k) {
      CHECK(a->tags[k] == b->tags[k]);
      CHECK(max_abs(sub(a->vectors[k], b->vectors[k])) < 1e-12);
    }
  }
}

TEST_CASE("noise schedule validation and noisy_latent endpoints") {
  auto bad = NoiseSchedule::from_values({0.5, 0.9});
  CHECK(!bad.ok());
  auto zero = NoiseSchedule::from_values({0.5, 0.0});
  CHECK(!zero.ok());
  auto good = NoiseSchedule::from_values({1.0, 0.25});
  REQUIRE(good.ok());

  Vec x0 = {1.0, 0.0};
  Vec eps = {0.0, 2.0};
  auto identity = noisy_latent(x0, eps, 0, *good);
  REQUIRE(identity.ok());
  CHECK((*identity)[0] == 1.0);
  CHECK((*identity)[1] == 0.0);

  auto mixed = noisy_latent(x0, eps, 1, *good);
  REQUIRE(mixed.ok());
  CHECK((*mixed)[0] == doctest::Approx(0.5));
  CHECK((*mixed)[1] == doctest::Approx(std::sqrt(0.75) * 2.0));

  NoiseSchedule eps_only;
  eps_only.alpha_bar = {1e-300};
  auto noise = noisy_latent(x0, eps, 0, eps_only);
  REQUIRE(noise.ok());
  CHECK((*noise)[1] == doctest::Approx(2.0));

  CHECK(!noisy_latent(x0, eps, 5, *good).ok());
  Vec short_eps = {1.0};
  CHECK(!noisy_latent(x0, short_eps, 0, *good).ok());
}

TEST_CASE("noisy_latent is linear in x0 and eps") {
  SplitMix64 rng{12};
  NoiseSchedule schedule = NoiseSchedule::linear(8, 0.98, 0.1);
  const Vec zero(5, 0.0);
  for (int i = 0; i < 20; ++i) {
    Vec x0(5), y0(5), eps(5), eta(5);
    for (auto* v : {&x0, &y0, &eps, &eta}) {
      for (double& x : *v) x = rng.unit() * 2 - 1;
    }
    std::size_t t = rng.bounded(8);
    Vec x0_sum(5), eps_sum(5);
    for (std::size_t d = 0; d < 5; ++d) {
      x0_sum[d] = x0[d] + y0[d];
      eps_sum[d] = eps[d] + eta[d];
    }
    // additivity in x0: f(x0+y0, eps) == f(x0, eps) + f(y0, 0)
    auto lhs = noisy_latent(x0_sum, eps, t, schedule);
    auto a = noisy_latent(x0, eps, t, schedule);
    auto b = noisy_latent(y0, zero, t, schedule);
    REQUIRE(lhs.ok());
    for (std::size_t d = 0; d < 5; ++d) {
      CHECK((*lhs)[d] == doctest::Approx((*a)[d] + (*b)[d]).epsilon(1e-12));
    }
    // additivity in eps: f(x0, eps+eta) == f(x0, eps) + f(0, eta)
    auto lhs2 = noisy_latent(x0, eps_sum, t, schedule);
    auto c = noisy_latent(zero, eta, t, schedule);
    REQUIRE(lhs2.ok());
    for (std::size_t d = 0; d < 5; ++d) {
      CHECK((*lhs2)[d] == doctest::Approx((*a)[d] + (*c)[d]).epsilon(1e-12));
    }
  }
}

namespace {

class OracleDenoiser final : public Denoiser {
 public:
  explicit OracleDenoiser(Vec fixed) : fixed_(std::move(fixed)) {}
  Vec predict(std::span<const double>, std::size_t, const SgEmbedding&) const override {
    return fixed_;
  }
  std::vector<Vec> conditioning_grad(std::span<const double>, std::size_t,
                                     const SgEmbedding& cond,
                                     std::span<const double>) const override {
    return std::vector<Vec>(cond.vectors.size(),
                            Vec(cond.vectors.empty() ? 0 : cond.vectors[0].size(), 0.0));
  }

 private:
  Vec fixed_;
};

}  // namespace

TEST_CASE("sg_loss endpoints: oracle denoiser and zero denoiser") {
  ToyLossSetup setup = make_toy_setup(1);

  OracleDenoiser oracle(setup.loss.eps);
  auto zero_loss = sg_loss(setup.graph, setup.backend, setup.params, oracle, setup.loss);
  REQUIRE(zero_loss.ok());
  CHECK(*zero_loss == 0.0);

  OracleDenoiser silent(Vec(setup.loss.eps.size(), 0.0));
  auto mse = sg_loss(setup.graph, setup.backend, setup.params, silent, setup.loss);
  REQUIRE(mse.ok());
  double expected = 0;
  for (double e : setup.loss.eps) expected += e * e;
  expected /= static_cast<double>(setup.loss.eps.size());
  CHECK(*mse == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("sg_loss with the toy denoiser matches a straight-line recomputation") {
  ToyLossSetup setup = make_toy_setup(2);
  auto loss = sg_loss(setup.graph, setup.backend, setup.params, setup.denoiser, setup.loss);
  REQUIRE(loss.ok());

  // straight-line recomputation through the public pieces
  auto embedding = assemble(setup.graph, setup.backend, setup.params);
  REQUIRE(embedding.ok());
  auto x_t = noisy_latent(setup.loss.x0, setup.loss.eps, setup.loss.timestep,
                          setup.loss.schedule);
  REQUIRE(x_t.ok());
  Vec pred = setup.denoiser.predict(*x_t, setup.loss.timestep, *embedding);
  double expected = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double diff = setup.loss.eps[i] - pred[i];
    expected += diff * diff;
  }
  expected /= static_cast<double>(pred.size());
  CHECK(*loss == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("grad_check stays under 1e-4 across 20 seeds at desk scale") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    ToyLossSetup setup = make_toy_setup(seed);
    auto check = grad_check(setup.graph, setup.backend, setup.params, setup.denoiser,
                            setup.loss, 1e-5);
    REQUIRE(check.ok());
    CHECK(*check < 1e-4);
  }
}

TEST_CASE("parameters without a path to the loss get exactly zero gradient") {
  // no relations -> no triples -> conditioning is raw single embeddings and
  // the message-passing weights never touch the loss
  const std::size_t dim = 6;
  SceneGraph g;
  g.items.push_back({0, "tree", {"tall"}, std::nullopt, {}});
  g.items.push_back({1, "cloud", {}, std::nullopt, {}});

  HashEmbeddingBackend backend(dim, 2);
  EncoderParams params = EncoderParams::seeded(dim, 5, 2, 8);
  params.alpha = 0.9;
  ToyLinearDenoiser denoiser(4, dim, 3);
  LossConfig loss;
  loss.x0 = {0.2, -0.1, 0.4, 0.3};
  loss.eps = {0.5, 0.1, -0.2, 0.6};
  loss.schedule = NoiseSchedule::linear(4, 0.9, 0.2);
  loss.timestep = 2;

  EncoderGrads grads;
  auto value = sg_loss_with_grads(g, backend, params, denoiser, loss, &grads);
  REQUIRE(value.ok());
  CHECK(grads.alpha == 0.0);
  for (const EncoderLayer& layer : grads.layers) {
    for (const std::vector<double>* arr :
         {&layer.w_message, &layer.b_message, &layer.w_update, &layer.b_update}) {
      for (double gradient : *arr) CHECK(gradient == 0.0);
    }
  }
}

TEST_CASE("alpha gradient at alpha=0 with zero weights matches the closed form") {
  const std::size_t dim = 5;
  const std::size_t latent = 3;
  HashEmbeddingBackend backend(dim, 6);
  SceneGraph g = rainbow_graph();
  EncoderParams params = EncoderParams::zeros(dim, 4, 2);  // alpha = 0
  ToyLinearDenoiser denoiser(latent, dim, 21);
  LossConfig loss;
  loss.x0 = {0.3, -0.5, 0.2};
  loss.eps = {-0.1, 0.4, 0.25};
  loss.schedule = NoiseSchedule::linear(6, 0.95, 0.2);
  loss.timestep = 3;

  EncoderGrads grads;
  auto value = sg_loss_with_grads(g, backend, params, denoiser, loss, &grads);
  REQUIRE(value.ok());

  // Closed form, derived by hand for the linear toy path at alpha = 0 with
  // zero-weight layers:
  //   pred      = A x_t + sum_k gamma_k C e_k           (e_k raw, alpha = 0)
  //   dL/dpred  = (2/n) (pred - eps)
  //   dL/dalpha = sum over triples i of
  //               gamma_i * (C^T dL/dpred) . mean(raw constituents of i)
  auto embedding = assemble(g, backend, params);
  REQUIRE(embedding.ok());
  auto x_t = noisy_latent(loss.x0, loss.eps, loss.timestep, loss.schedule);
  REQUIRE(x_t.ok());
  Vec pred = denoiser.predict(*x_t, loss.timestep, *embedding);
  Vec pred_grad(latent);
  for (std::size_t i = 0; i < latent; ++i) {
    pred_grad[i] = 2.0 * (pred[i] - loss.eps[i]) / static_cast<double>(latent);
  }
  std::vector<Vec> cond_grad =
      denoiser.conditioning_grad(*x_t, loss.timestep, *embedding, pred_grad);

  Vec subject = backend.embed("rainbow");
  Vec object = backend.embed("valley");
  Vec w1 = backend.embed("span");
  Vec w2 = backend.embed("over");
  double expected = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    double e_r = (subject[d] + object[d] + w1[d] + w2[d]) / 4.0;
    expected += cond_grad[0][d] * e_r;
  }
  CHECK(grads.alpha == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("checkpoint save/load round-trips and rejects corruption") {
  test::TempDir dir("ckpt");
  EncoderParams params = EncoderParams::seeded(6, 5, 3, 404);
  params.alpha = 0.25;
  std::string path = dir.file("encoder.ckpt");
  save_params(params, path);

  auto loaded = load_params(path);
  REQUIRE(loaded.ok());
  CHECK(loaded->dim == params.dim);
  CHECK(loaded->hidden == params.hidden);
  CHECK(loaded->alpha == params.alpha);
  REQUIRE(loaded->layers.size() == params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    CHECK(loaded->layers[l].w_message == params.layers[l].w_message);
    CHECK(loaded->layers[l].w_update == params.layers[l].w_update);
  }

  // truncated payload -> dim mismatch
  std::string bytes = test::read_file(path);
  test::write_file(dir.file("short.ckpt"), bytes.substr(0, bytes.size() - 16));
  auto truncated = load_params(dir.file("short.ckpt"));
  REQUIRE(!truncated.ok());
  CHECK(truncated.error().code == "dim-mismatch");

  // oversized payload is rejected too
  test::write_file(dir.file("long.ckpt"), bytes + std::string(8, '\0'));
  CHECK(!load_params(dir.file("long.ckpt")).ok());

  test::write_file(dir.file("not.ckpt"), "plainly not a checkpoint");
  auto bad_magic = load_params(dir.file("not.ckpt"));
  REQUIRE(!bad_magic.ok());
  CHECK(bad_magic.error().code == "bad-magic");
}

TEST_CASE("embedding matrix and provenance emission") {
  HashEmbeddingBackend backend(4, 0);
  SceneGraph g = rainbow_graph();
  g.items.push_back({9, "cloud", {"soft"}, std::nullopt, {}});
  auto embedding = assemble(g, backend, EncoderParams::zeros(4, 4, 1));
  REQUIRE(embedding.ok());
  std::string matrix = embedding_matrix_text(*embedding);
  CHECK(std::count(matrix.begin(), matrix.end(), '\n') == 2);
  std::string prov = embedding_provenance_text(*embedding);
  CHECK(prov == "t0\ns9\n");
}

TEST_CASE("grad_check enforces desk scale") {
  ToyLossSetup setup = make_toy_setup(3, /*dim=*/6);
  EncoderParams big = EncoderParams::seeded(32, 8, 1, 1);
  HashEmbeddingBackend big_backend(32, 1);
  ToyLinearDenoiser denoiser(4, 32, 1);
  auto refused = grad_check(setup.graph, big_backend, big, denoiser, setup.loss);
  REQUIRE(!refused.ok());
  CHECK(refused.error().code == "desk-scale");
}
