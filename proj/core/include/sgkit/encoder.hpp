#pragma once

// Reference scene-graph encoder with analytic gradients.
//
// A scene graph is lowered to a feature graph (attributes become nodes, and
// every word of a relation phrase contributes one edge between the related
// object nodes), refined by L rounds of residual mean-aggregation message
// passing, and assembled into a conditioning sequence: for each triple
//
//     v_i = embed(triple text) + alpha * refined(triple_i)
//
// followed by one embed(label) vector per single (relation-free) object.
// `alpha` starts at exactly zero, so a freshly initialized encoder is the
// identity on the raw embeddings.
//
// Per message-passing round, with node states h and edge features f:
//
//     m_(u->v) = W_m [h_u ; f_e] + b_m          (message, width H)
//     a_v      = mean over incident edges of m  (both directions)
//     h_v     <- h_v + tanh(W_u a_v + b_u)      (residual update)
//
// Isolated nodes pass through unchanged. All arithmetic is double
// precision; the backward pass is exact reverse-mode differentiation and is
// validated against central finite differences by grad_check().

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sgkit/clients.hpp"
#include "sgkit/expected.hpp"
#include "sgkit/model.hpp"

namespace sgkit {

using Vec = std::vector<double>;

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::size_t dimension() const = 0;
  // Deterministic: the same text always yields the same vector.
  virtual Vec embed(const std::string& text) const = 0;
};

// Deterministic seeded-hash backend producing unit-norm vectors; exists for
// tests and offline runs, not as a semantic embedding.
class HashEmbeddingBackend final : public EmbeddingBackend {
 public:
  explicit HashEmbeddingBackend(std::size_t dimension, std::uint64_t seed = 0);
  std::size_t dimension() const override { return dimension_; }
  Vec embed(const std::string& text) const override;

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

// Remote embedding service speaking a JSON-over-HTTP embeddings protocol.
std::unique_ptr<EmbeddingBackend> make_http_embedding_backend(EndpointConfig config,
                                                              std::size_t dimension);

struct EncoderError {
  std::string code;
  std::string message;
};

// ---------------------------------------------------------------------------
// Graph lowering.

enum class NodeKind { object, attribute };

struct LoweredNode {
  NodeKind kind = NodeKind::object;
  std::int64_t item_id = 0;
  int attr_index = -1;  // attribute nodes only
  Vec feature;
};

enum class EdgeKind { relation_word, attribute };

struct LoweredEdge {
  EdgeKind kind = EdgeKind::relation_word;
  std::size_t src = 0;  // node index (subject / object owner)
  std::size_t dst = 0;  // node index (object / attribute node)
  Vec feature;
  std::int64_t triple_id = -1;  // relation_word edges
  int word_index = -1;          // relation_word edges
  std::int64_t item_id = -1;    // attribute edges: owning item
  int attr_index = -1;          // attribute edges
};

struct TripleSlots {
  std::size_t subject_node = 0;
  std::size_t object_node = 0;
  std::vector<std::size_t> edge_indices;  // one per relation word
};

struct LoweredGraph {
  std::vector<LoweredNode> nodes;
  std::vector<LoweredEdge> edges;
  std::map<std::int64_t, TripleSlots> triple_index;  // triple_id -> slots
  std::size_t dimension = 0;
};

// Feature used for attribute edges (the phrase is embedded like any word).
inline constexpr const char* kAttributeEdgePhrase = "has attribute";

Expected<LoweredGraph, EncoderError> lower(const SceneGraph& graph,
                                           const EmbeddingBackend& backend);

// ---------------------------------------------------------------------------
// Parameters.

struct EncoderLayer {
  // message transform: H x 2D, row-major; bias H
  std::vector<double> w_message;
  std::vector<double> b_message;
  // update transform: D x H, row-major; bias D
  std::vector<double> w_update;
  std::vector<double> b_update;
};

struct EncoderParams {
  std::size_t dim = 512;     // node/edge feature width D
  std::size_t hidden = 512;  // message width H
  std::vector<EncoderLayer> layers;
  double alpha = 0.0;  // refined-embedding gate; starts at exactly zero

  static EncoderParams zeros(std::size_t dim, std::size_t hidden, std::size_t n_layers);
  // Uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)); alpha stays 0.
  static EncoderParams seeded(std::size_t dim, std::size_t hidden, std::size_t n_layers,
                              std::uint64_t seed);

  std::size_t n_layers() const { return layers.size(); }
  // Total scalar parameter count including alpha.
  std::size_t parameter_count() const;
};

// Versioned binary checkpoint:
//   magic "SGENCPT1" | u32 dim | u32 hidden | u32 layers | f64 alpha
//   | per layer: w_message, b_message, w_update, b_update as little-endian f64
// The loader rejects files whose payload does not match the header dims.
void save_params(const EncoderParams& params, const std::string& path);
Expected<EncoderParams, EncoderError> load_params(const std::string& path);

// ---------------------------------------------------------------------------
// Forward pass.

struct GnnStates {
  // node_states[l] = states entering layer l; node_states[L] = final.
  std::vector<std::vector<Vec>> node_states;
  // Edge states are not updated by the message passing; they alias the
  // lowered edge features and are exposed for triple refinement.
  std::vector<Vec> edge_states;
  // caches for the backward pass, per layer per node
  std::vector<std::vector<Vec>> aggregates;  // a_v (empty for isolated nodes)
  std::vector<std::vector<Vec>> tanh_out;    // tanh(W_u a_v + b_u)
};

Expected<GnnStates, EncoderError> gnn_forward(const LoweredGraph& lowered,
                                              const EncoderParams& params);

// e_r(triple) = mean of the final states of subject node, object node and
// the triple's word-edge states.
Expected<std::map<std::int64_t, Vec>, EncoderError> refine_triples(const LoweredGraph& lowered,
                                                                   const GnnStates& states);

// ---------------------------------------------------------------------------
// Assembly (conditioning sequence).

struct ProvenanceTag {
  enum Kind { triple, single } kind = triple;
  std::int64_t id = 0;  // triple_id or item_id

  bool operator==(const ProvenanceTag&) const = default;
};

struct SgEmbedding {
  std::vector<Vec> vectors;          // triples in triple_id order, then singles
  std::vector<ProvenanceTag> tags;   // one per vector
  std::size_t n_triples = 0;
};

struct AssembleOptions {
  bool attributes_in_triple_text = true;
};

// Text fed to the embedding backend for one triple:
// "{subject attrs} {subject label} {relation} {object attrs} {object label}".
std::string render_triple_text(const ResolvedTriple& triple, const AssembleOptions& options = {});

Expected<SgEmbedding, EncoderError> assemble(const SceneGraph& graph,
                                             const EmbeddingBackend& backend,
                                             const EncoderParams& params,
                                             const AssembleOptions& options = {});

// ---------------------------------------------------------------------------
// Diffusion-loss harness.

struct NoiseSchedule {
  // alpha_bar[t] in (0, 1], non-increasing in t.
  std::vector<double> alpha_bar;

  static Expected<NoiseSchedule, EncoderError> from_values(std::vector<double> alpha_bar);
  // Linear decay from `first` down to `last` over `steps` timesteps.
  static NoiseSchedule linear(std::size_t steps, double first = 0.9999, double last = 0.01);
  bool has(std::size_t t) const { return t < alpha_bar.size(); }
};

// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
Expected<Vec, EncoderError> noisy_latent(std::span<const double> x0, std::span<const double> eps,
                                         std::size_t t, const NoiseSchedule& schedule);

class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Vec predict(std::span<const double> x_t, std::size_t t,
                      const SgEmbedding& conditioning) const = 0;
  // dLoss/d(conditioning vectors) given dLoss/d(prediction); required for
  // encoder training and gradient checks. External denoisers that cannot
  // provide it may throw.
  virtual std::vector<Vec> conditioning_grad(std::span<const double> x_t, std::size_t t,
                                             const SgEmbedding& conditioning,
                                             std::span<const double> pred_grad) const = 0;
};

// pred = A x_t + sum_k gamma_k (C e_k) with gamma_k = 1/(k+1); A, C seeded.
// Small, linear, and fully differentiable: the standing test denoiser.
class ToyLinearDenoiser final : public Denoiser {
 public:
  ToyLinearDenoiser(std::size_t latent_dim, std::size_t embed_dim, std::uint64_t seed);
  Vec predict(std::span<const double> x_t, std::size_t t,
              const SgEmbedding& conditioning) const override;
  std::vector<Vec> conditioning_grad(std::span<const double> x_t, std::size_t t,
                                     const SgEmbedding& conditioning,
                                     std::span<const double> pred_grad) const override;

 private:
  std::size_t latent_dim_;
  std::size_t embed_dim_;
  std::vector<double> a_;  // latent_dim x latent_dim
  std::vector<double> c_;  // latent_dim x embed_dim
};

struct LossConfig {
  Vec x0;
  Vec eps;
  std::size_t timestep = 0;
  NoiseSchedule schedule;
};

// Mean squared error between eps and the denoiser prediction conditioned on
// the assembled scene-graph embedding.
Expected<double, EncoderError> sg_loss(const SceneGraph& graph, const EmbeddingBackend& backend,
                                       const EncoderParams& params, const Denoiser& denoiser,
                                       const LossConfig& loss);

// Gradients of sg_loss with respect to alpha and every layer weight.
struct EncoderGrads {
  double alpha = 0.0;
  std::vector<EncoderLayer> layers;  // same shapes as the params
};

Expected<double, EncoderError> sg_loss_with_grads(const SceneGraph& graph,
                                                  const EmbeddingBackend& backend,
                                                  const EncoderParams& params,
                                                  const Denoiser& denoiser,
                                                  const LossConfig& loss, EncoderGrads* grads);

// Max over parameters of |g_analytic - g_fd| / max(1e-8, |g_analytic| +
// |g_fd|) with central finite differences of step eps_fd. Desk scale only.
Expected<double, EncoderError> grad_check(const SceneGraph& graph,
                                          const EmbeddingBackend& backend,
                                          const EncoderParams& params, const Denoiser& denoiser,
                                          const LossConfig& loss, double eps_fd = 1e-5);

// Embedding matrix emission: one row per vector ("%.17g" columns) plus a
// provenance sidecar with one tag per row.
std::string embedding_matrix_text(const SgEmbedding& embedding);
std::string embedding_provenance_text(const SgEmbedding& embedding);

}  // namespace sgkit
