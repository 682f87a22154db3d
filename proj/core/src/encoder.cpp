#include "sgkit/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sgkit/digest.hpp"
#include "sgkit/rng.hpp"

namespace sgkit {

namespace {

EncoderError err(std::string code, std::string message) {
  return EncoderError{std::move(code), std::move(message)};
}

// y = W x + b with W row-major (rows x cols).
void affine(const std::vector<double>& w, const std::vector<double>& b,
            std::span<const double> x, std::size_t rows, std::size_t cols, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = b[r];
    const double* row = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

std::vector<std::string> whitespace_words(std::string_view phrase) {
  std::vector<std::string> words;
  std::string current;
  for (char c : phrase) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) words.push_back(std::move(current)), current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

}  // namespace

HashEmbeddingBackend::HashEmbeddingBackend(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {}

Vec HashEmbeddingBackend::embed(const std::string& text) const {
  SplitMix64 rng{fnv1a64(text, 1469598103934665603ULL ^ (seed_ * 0x9E3779B97F4A7C15ULL))};
  Vec v(dimension_);
  double norm_sq = 0.0;
  for (double& x : v) {
    x = rng.unit() * 2.0 - 1.0;
    norm_sq += x * x;
  }
  if (norm_sq == 0.0) {
    v[0] = 1.0;
    return v;
  }
  double inv = 1.0 / std::sqrt(norm_sq);
  for (double& x : v) x *= inv;
  return v;
}

// ---------------------------------------------------------------------------
// Lowering.

Expected<LoweredGraph, EncoderError> lower(const SceneGraph& graph,
                                           const EmbeddingBackend& backend) {
  ValidationReport report = validate_graph(graph, ValidationMode::lenient);
  if (!report.accepted()) {
    return err(report.errors.front().rule,
               "graph failed lenient validation at " + report.errors.front().location + ": " +
                   report.errors.front().message);
  }

  LoweredGraph lowered;
  lowered.dimension = backend.dimension();
  const Vec attribute_edge_feature = backend.embed(kAttributeEdgePhrase);

  std::map<std::int64_t, std::size_t> object_node_of;
  for (const Item& item : graph.items) {
    std::size_t object_node = lowered.nodes.size();
    object_node_of[item.item_id] = object_node;
    lowered.nodes.push_back({NodeKind::object, item.item_id, -1, backend.embed(item.label)});
    for (std::size_t a = 0; a < item.attributes.size(); ++a) {
      std::size_t attr_node = lowered.nodes.size();
      lowered.nodes.push_back(
          {NodeKind::attribute, item.item_id, static_cast<int>(a),
           backend.embed(item.attributes[a])});
      LoweredEdge edge;
      edge.kind = EdgeKind::attribute;
      edge.src = object_node;
      edge.dst = attr_node;
      edge.feature = attribute_edge_feature;
      edge.item_id = item.item_id;
      edge.attr_index = static_cast<int>(a);
      lowered.edges.push_back(std::move(edge));
    }
  }

  for (const Relation& rel : graph.relations) {
    TripleSlots slots;
    slots.subject_node = object_node_of.at(rel.item1);
    slots.object_node = object_node_of.at(rel.item2);
    std::vector<std::string> words = whitespace_words(rel.relation);
    for (std::size_t w = 0; w < words.size(); ++w) {
      LoweredEdge edge;
      edge.kind = EdgeKind::relation_word;
      edge.src = slots.subject_node;
      edge.dst = slots.object_node;
      edge.feature = backend.embed(words[w]);
      edge.triple_id = rel.triple_id;
      edge.word_index = static_cast<int>(w);
      slots.edge_indices.push_back(lowered.edges.size());
      lowered.edges.push_back(std::move(edge));
    }
    lowered.triple_index.emplace(rel.triple_id, std::move(slots));
  }
  return lowered;
}

// ---------------------------------------------------------------------------
// Parameters.

EncoderParams EncoderParams::zeros(std::size_t dim, std::size_t hidden, std::size_t n_layers) {
  EncoderParams p;
  p.dim = dim;
  p.hidden = hidden;
  p.alpha = 0.0;
  p.layers.resize(n_layers);
  for (EncoderLayer& layer : p.layers) {
    layer.w_message.assign(hidden * 2 * dim, 0.0);
    layer.b_message.assign(hidden, 0.0);
    layer.w_update.assign(dim * hidden, 0.0);
    layer.b_update.assign(dim, 0.0);
  }
  return p;
}

EncoderParams EncoderParams::seeded(std::size_t dim, std::size_t hidden, std::size_t n_layers,
                                    std::uint64_t seed) {
  EncoderParams p = zeros(dim, hidden, n_layers);
  SplitMix64 rng{seed};
  auto fill = [&](std::vector<double>& w, std::size_t fan_in, std::size_t fan_out) {
    double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& x : w) x = (rng.unit() * 2.0 - 1.0) * s;
  };
  for (EncoderLayer& layer : p.layers) {
    fill(layer.w_message, 2 * dim, hidden);
    fill(layer.w_update, hidden, dim);
    // biases stay zero
  }
  return p;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 1;  // alpha
  for (const EncoderLayer& layer : layers) {
    n += layer.w_message.size() + layer.b_message.size() + layer.w_update.size() +
         layer.b_update.size();
  }
  return n;
}

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'G', 'E', 'N', 'C', 'P', 'T', '1'};

bool layer_shapes_ok(const EncoderParams& p) {
  for (const EncoderLayer& layer : p.layers) {
    if (layer.w_message.size() != p.hidden * 2 * p.dim) return false;
    if (layer.b_message.size() != p.hidden) return false;
    if (layer.w_update.size() != p.dim * p.hidden) return false;
    if (layer.b_update.size() != p.dim) return false;
  }
  return true;
}

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

bool read_doubles(std::ifstream& in, std::vector<double>& v, std::size_t n) {
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  return static_cast<std::size_t>(in.gcount()) == n * sizeof(double);
}

}  // namespace

void save_params(const EncoderParams& params, const std::string& path) {
  if (!layer_shapes_ok(params)) throw std::runtime_error("inconsistent parameter shapes");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  std::uint32_t header[3] = {static_cast<std::uint32_t>(params.dim),
                             static_cast<std::uint32_t>(params.hidden),
                             static_cast<std::uint32_t>(params.layers.size())};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(&params.alpha), sizeof(double));
  for (const EncoderLayer& layer : params.layers) {
    write_doubles(out, layer.w_message);
    write_doubles(out, layer.b_message);
    write_doubles(out, layer.w_update);
    write_doubles(out, layer.b_update);
  }
  if (!out) throw std::runtime_error("write failure: " + path);
}

Expected<EncoderParams, EncoderError> load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return err("io", "cannot open: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    return err("bad-magic", "not an encoder checkpoint: " + path);
  }
  std::uint32_t header[3];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (in.gcount() != sizeof(header)) return err("truncated", "checkpoint header truncated");
  EncoderParams p;
  p.dim = header[0];
  p.hidden = header[1];
  std::size_t n_layers = header[2];
  if (p.dim == 0 || p.dim > 65536 || p.hidden == 0 || p.hidden > 65536 || n_layers > 4096) {
    return err("dim-mismatch", "implausible dims in checkpoint header");
  }
  in.read(reinterpret_cast<char*>(&p.alpha), sizeof(double));
  if (in.gcount() != sizeof(double)) return err("truncated", "checkpoint alpha truncated");
  p.layers.resize(n_layers);
  for (EncoderLayer& layer : p.layers) {
    if (!read_doubles(in, layer.w_message, p.hidden * 2 * p.dim) ||
        !read_doubles(in, layer.b_message, p.hidden) ||
        !read_doubles(in, layer.w_update, p.dim * p.hidden) ||
        !read_doubles(in, layer.b_update, p.dim)) {
      return err("dim-mismatch", "checkpoint payload shorter than header dims require");
    }
  }
  in.peek();
  if (!in.eof()) return err("dim-mismatch", "checkpoint payload longer than header dims require");
  return p;
}

// ---------------------------------------------------------------------------
// Forward pass.

namespace {

struct Incidence {
  std::size_t edge = 0;
  std::size_t neighbor = 0;
};

std::vector<std::vector<Incidence>> build_incidence(const LoweredGraph& lowered) {
  std::vector<std::vector<Incidence>> inc(lowered.nodes.size());
  for (std::size_t e = 0; e < lowered.edges.size(); ++e) {
    const LoweredEdge& edge = lowered.edges[e];
    inc[edge.dst].push_back({e, edge.src});  // dst receives from src
    inc[edge.src].push_back({e, edge.dst});  // src receives from dst
  }
  return inc;
}

EncoderError dims_error(const char* what) {
  return EncoderError{"dim-mismatch", what};
}

}  // namespace

Expected<GnnStates, EncoderError> gnn_forward(const LoweredGraph& lowered,
                                              const EncoderParams& params) {
  const std::size_t dim = params.dim;
  const std::size_t hidden = params.hidden;
  if (lowered.dimension != dim) return dims_error("lowered graph dimension != params.dim");
  if (!layer_shapes_ok(params)) return dims_error("inconsistent layer shapes");
  for (const LoweredNode& node : lowered.nodes) {
    if (node.feature.size() != dim) return dims_error("node feature width != dim");
  }
  for (const LoweredEdge& edge : lowered.edges) {
    if (edge.feature.size() != dim) return dims_error("edge feature width != dim");
  }

  const std::size_t n = lowered.nodes.size();
  const std::size_t n_layers = params.layers.size();
  auto inc = build_incidence(lowered);

  GnnStates states;
  states.edge_states.reserve(lowered.edges.size());
  for (const LoweredEdge& edge : lowered.edges) states.edge_states.push_back(edge.feature);

  states.node_states.resize(n_layers + 1);
  states.node_states[0].resize(n);
  for (std::size_t v = 0; v < n; ++v) states.node_states[0][v] = lowered.nodes[v].feature;
  states.aggregates.assign(n_layers, std::vector<Vec>(n));
  states.tanh_out.assign(n_layers, std::vector<Vec>(n));

  Vec message(hidden);
  Vec input(2 * dim);
  Vec z(dim);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const EncoderLayer& layer = params.layers[l];
    const std::vector<Vec>& h = states.node_states[l];
    std::vector<Vec>& h_next = states.node_states[l + 1];
    h_next = h;  // residual baseline; isolated nodes stay as-is
    for (std::size_t v = 0; v < n; ++v) {
      if (inc[v].empty()) continue;
      Vec aggregate(hidden, 0.0);
      for (const Incidence& in_edge : inc[v]) {
        std::copy(h[in_edge.neighbor].begin(), h[in_edge.neighbor].end(), input.begin());
        std::copy(lowered.edges[in_edge.edge].feature.begin(),
                  lowered.edges[in_edge.edge].feature.end(), input.begin() + dim);
        affine(layer.w_message, layer.b_message, input, hidden, 2 * dim, message.data());
        for (std::size_t k = 0; k < hidden; ++k) aggregate[k] += message[k];
      }
      const double inv_deg = 1.0 / static_cast<double>(inc[v].size());
      for (std::size_t k = 0; k < hidden; ++k) aggregate[k] *= inv_deg;
      affine(layer.w_update, layer.b_update, aggregate, dim, hidden, z.data());
      Vec t(dim);
      for (std::size_t d = 0; d < dim; ++d) t[d] = std::tanh(z[d]);
      for (std::size_t d = 0; d < dim; ++d) h_next[v][d] = h[v][d] + t[d];
      states.aggregates[l][v] = std::move(aggregate);
      states.tanh_out[l][v] = std::move(t);
    }
  }
  return states;
}

Expected<std::map<std::int64_t, Vec>, EncoderError> refine_triples(const LoweredGraph& lowered,
                                                                   const GnnStates& states) {
  if (states.node_states.empty() || states.node_states.back().size() != lowered.nodes.size()) {
    return dims_error("states do not match the lowered graph");
  }
  const std::vector<Vec>& final_states = states.node_states.back();
  const std::size_t dim = lowered.dimension;
  std::map<std::int64_t, Vec> refined;
  for (const auto& [triple_id, slots] : lowered.triple_index) {
    Vec sum(dim, 0.0);
    auto add = [&](const Vec& v) {
      for (std::size_t d = 0; d < dim; ++d) sum[d] += v[d];
    };
    add(final_states[slots.subject_node]);
    add(final_states[slots.object_node]);
    for (std::size_t e : slots.edge_indices) add(states.edge_states[e]);
    const double inv = 1.0 / static_cast<double>(2 + slots.edge_indices.size());
    for (double& x : sum) x *= inv;
    refined.emplace(triple_id, std::move(sum));
  }
  return refined;
}

// ---------------------------------------------------------------------------
// Assembly.

std::string render_triple_text(const ResolvedTriple& triple, const AssembleOptions& options) {
  std::string out;
  auto append = [&out](std::string_view part) {
    if (part.empty()) return;
    if (!out.empty()) out += ' ';
    out += part;
  };
  if (options.attributes_in_triple_text) {
    for (const std::string& attr : triple.subject.attributes) append(attr);
  }
  append(triple.subject.label);
  append(triple.relation);
  if (options.attributes_in_triple_text) {
    for (const std::string& attr : triple.object.attributes) append(attr);
  }
  append(triple.object.label);
  return out;
}

namespace {

// Everything sg_loss needs from one forward pass, kept for the backward pass.
struct ForwardTrace {
  LoweredGraph lowered;
  GnnStates states;
  std::map<std::int64_t, Vec> refined;
  std::vector<ResolvedTriple> resolved;
  SgEmbedding embedding;
};

Expected<ForwardTrace, EncoderError> assemble_traced(const SceneGraph& graph,
                                                     const EmbeddingBackend& backend,
                                                     const EncoderParams& params,
                                                     const AssembleOptions& options) {
  ForwardTrace trace;
  auto lowered = lower(graph, backend);
  if (!lowered) return lowered.error();
  trace.lowered = std::move(lowered.value());

  auto states = gnn_forward(trace.lowered, params);
  if (!states) return states.error();
  trace.states = std::move(states.value());

  auto refined = refine_triples(trace.lowered, trace.states);
  if (!refined) return refined.error();
  trace.refined = std::move(refined.value());

  auto resolved = triples(graph);
  if (!resolved) return err(resolved.error().code, resolved.error().message);
  trace.resolved = std::move(resolved.value());

  SgEmbedding& out = trace.embedding;
  out.n_triples = trace.resolved.size();
  for (const ResolvedTriple& triple : trace.resolved) {
    Vec v = backend.embed(render_triple_text(triple, options));
    if (params.alpha != 0.0) {
      const Vec& e_r = trace.refined.at(triple.triple_id);
      for (std::size_t d = 0; d < v.size(); ++d) v[d] += params.alpha * e_r[d];
    }
    out.vectors.push_back(std::move(v));
    out.tags.push_back({ProvenanceTag::triple, triple.triple_id});
  }
  for (const Item& item : single_objects(graph)) {
    out.vectors.push_back(backend.embed(item.label));
    out.tags.push_back({ProvenanceTag::single, item.item_id});
  }
  return trace;
}

}  // namespace

Expected<SgEmbedding, EncoderError> assemble(const SceneGraph& graph,
                                             const EmbeddingBackend& backend,
                                             const EncoderParams& params,
                                             const AssembleOptions& options) {
  auto trace = assemble_traced(graph, backend, params, options);
  if (!trace) return trace.error();
  return std::move(trace->embedding);
}

// ---------------------------------------------------------------------------
// Noise schedule and loss.

Expected<NoiseSchedule, EncoderError> NoiseSchedule::from_values(std::vector<double> alpha_bar) {
  double prev = 1.0;
  for (std::size_t t = 0; t < alpha_bar.size(); ++t) {
    double a = alpha_bar[t];
    if (!(a > 0.0) || a > 1.0) {
      return err("bad-schedule", "alpha_bar[" + std::to_string(t) + "] outside (0, 1]");
    }
    if (a > prev) {
      return err("bad-schedule", "alpha_bar must be non-increasing (violated at t=" +
                                     std::to_string(t) + ")");
    }
    prev = a;
  }
  NoiseSchedule s;
  s.alpha_bar = std::move(alpha_bar);
  return s;
}

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double first, double last) {
  NoiseSchedule s;
  s.alpha_bar.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    double frac = steps > 1 ? static_cast<double>(t) / static_cast<double>(steps - 1) : 0.0;
    s.alpha_bar[t] = first + (last - first) * frac;
  }
  return s;
}

Expected<Vec, EncoderError> noisy_latent(std::span<const double> x0, std::span<const double> eps,
                                         std::size_t t, const NoiseSchedule& schedule) {
  if (x0.size() != eps.size()) return dims_error("x0 and eps must have the same length");
  if (!schedule.has(t)) {
    return err("bad-timestep", "timestep " + std::to_string(t) + " not in schedule");
  }
  const double ab = schedule.alpha_bar[t];
  const double signal = std::sqrt(ab);
  const double noise = std::sqrt(1.0 - ab);
  Vec out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = signal * x0[i] + noise * eps[i];
  return out;
}

ToyLinearDenoiser::ToyLinearDenoiser(std::size_t latent_dim, std::size_t embed_dim,
                                     std::uint64_t seed)
    : latent_dim_(latent_dim), embed_dim_(embed_dim) {
  SplitMix64 rng{seed};
  a_.resize(latent_dim * latent_dim);
  c_.resize(latent_dim * embed_dim);
  for (double& x : a_) x = rng.unit() - 0.5;
  for (double& x : c_) x = rng.unit() - 0.5;
}

Vec ToyLinearDenoiser::predict(std::span<const double> x_t, std::size_t /*t*/,
                               const SgEmbedding& conditioning) const {
  if (x_t.size() != latent_dim_) throw std::invalid_argument("x_t width != latent_dim");
  Vec out(latent_dim_, 0.0);
  for (std::size_t r = 0; r < latent_dim_; ++r) {
    double acc = 0.0;
    const double* row = a_.data() + r * latent_dim_;
    for (std::size_t c = 0; c < latent_dim_; ++c) acc += row[c] * x_t[c];
    out[r] = acc;
  }
  for (std::size_t k = 0; k < conditioning.vectors.size(); ++k) {
    const Vec& e = conditioning.vectors[k];
    if (e.size() != embed_dim_) throw std::invalid_argument("conditioning width != embed_dim");
    const double gamma = 1.0 / static_cast<double>(k + 1);
    for (std::size_t r = 0; r < latent_dim_; ++r) {
      double acc = 0.0;
      const double* row = c_.data() + r * embed_dim_;
      for (std::size_t d = 0; d < embed_dim_; ++d) acc += row[d] * e[d];
      out[r] += gamma * acc;
    }
  }
  return out;
}

std::vector<Vec> ToyLinearDenoiser::conditioning_grad(std::span<const double> /*x_t*/,
                                                      std::size_t /*t*/,
                                                      const SgEmbedding& conditioning,
                                                      std::span<const double> pred_grad) const {
  if (pred_grad.size() != latent_dim_) throw std::invalid_argument("pred_grad width");
  // d pred_r / d e_k[d] = gamma_k * C[r][d]
  Vec ct_g(embed_dim_, 0.0);
  for (std::size_t r = 0; r < latent_dim_; ++r) {
    const double* row = c_.data() + r * embed_dim_;
    for (std::size_t d = 0; d < embed_dim_; ++d) ct_g[d] += row[d] * pred_grad[r];
  }
  std::vector<Vec> grads(conditioning.vectors.size());
  for (std::size_t k = 0; k < grads.size(); ++k) {
    const double gamma = 1.0 / static_cast<double>(k + 1);
    grads[k].resize(embed_dim_);
    for (std::size_t d = 0; d < embed_dim_; ++d) grads[k][d] = gamma * ct_g[d];
  }
  return grads;
}

namespace {

struct LossForward {
  ForwardTrace trace;
  Vec x_t;
  Vec pred;
  double loss = 0.0;
};

Expected<LossForward, EncoderError> loss_forward(const SceneGraph& graph,
                                                 const EmbeddingBackend& backend,
                                                 const EncoderParams& params,
                                                 const Denoiser& denoiser,
                                                 const LossConfig& loss) {
  LossForward fwd;
  auto trace = assemble_traced(graph, backend, params, {});
  if (!trace) return trace.error();
  fwd.trace = std::move(trace.value());

  auto x_t = noisy_latent(loss.x0, loss.eps, loss.timestep, loss.schedule);
  if (!x_t) return x_t.error();
  fwd.x_t = std::move(x_t.value());

  fwd.pred = denoiser.predict(fwd.x_t, loss.timestep, fwd.trace.embedding);
  if (fwd.pred.size() != loss.eps.size()) {
    return dims_error("denoiser output width != eps width");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < fwd.pred.size(); ++i) {
    const double diff = loss.eps[i] - fwd.pred[i];
    acc += diff * diff;
  }
  fwd.loss = acc / static_cast<double>(fwd.pred.size());
  return fwd;
}

}  // namespace

Expected<double, EncoderError> sg_loss(const SceneGraph& graph, const EmbeddingBackend& backend,
                                       const EncoderParams& params, const Denoiser& denoiser,
                                       const LossConfig& loss) {
  auto fwd = loss_forward(graph, backend, params, denoiser, loss);
  if (!fwd) return fwd.error();
  return fwd->loss;
}

Expected<double, EncoderError> sg_loss_with_grads(const SceneGraph& graph,
                                                  const EmbeddingBackend& backend,
                                                  const EncoderParams& params,
                                                  const Denoiser& denoiser,
                                                  const LossConfig& loss, EncoderGrads* grads) {
  auto fwd_or = loss_forward(graph, backend, params, denoiser, loss);
  if (!fwd_or) return fwd_or.error();
  LossForward& fwd = fwd_or.value();
  const ForwardTrace& trace = fwd.trace;
  const LoweredGraph& lowered = trace.lowered;
  const std::size_t dim = params.dim;
  const std::size_t hidden = params.hidden;
  const std::size_t n_nodes = lowered.nodes.size();
  const std::size_t n_layers = params.layers.size();

  EncoderGrads& g = *grads;
  g.alpha = 0.0;
  g.layers.assign(n_layers, EncoderLayer{});
  for (EncoderLayer& layer : g.layers) {
    layer.w_message.assign(hidden * 2 * dim, 0.0);
    layer.b_message.assign(hidden, 0.0);
    layer.w_update.assign(dim * hidden, 0.0);
    layer.b_update.assign(dim, 0.0);
  }

  // dLoss/dpred for mean squared error.
  const std::size_t n_out = fwd.pred.size();
  Vec pred_grad(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    pred_grad[i] = 2.0 * (fwd.pred[i] - loss.eps[i]) / static_cast<double>(n_out);
  }

  std::vector<Vec> cond_grad =
      denoiser.conditioning_grad(fwd.x_t, loss.timestep, trace.embedding, pred_grad);
  if (cond_grad.size() != trace.embedding.vectors.size()) {
    return dims_error("conditioning_grad returned wrong vector count");
  }

  // Through the assembly: v_i = e_t_i + alpha * e_r_i for triples; singles
  // carry no parameter dependence.
  std::vector<Vec> node_grad(n_nodes, Vec(dim, 0.0));
  for (std::size_t i = 0; i < trace.embedding.n_triples; ++i) {
    const std::int64_t triple_id = trace.embedding.tags[i].id;
    const Vec& e_r = trace.refined.at(triple_id);
    const Vec& gv = cond_grad[i];
    double dot = 0.0;
    for (std::size_t d = 0; d < dim; ++d) dot += gv[d] * e_r[d];
    g.alpha += dot;

    // dLoss/d e_r = alpha * gv, spread over the refine-mean constituents.
    const TripleSlots& slots = lowered.triple_index.at(triple_id);
    const double coeff =
        params.alpha / static_cast<double>(2 + slots.edge_indices.size());
    if (coeff != 0.0) {
      for (std::size_t d = 0; d < dim; ++d) {
        node_grad[slots.subject_node][d] += coeff * gv[d];
        node_grad[slots.object_node][d] += coeff * gv[d];
      }
      // Edge states are raw features: no parameter path.
    }
  }

  // Reverse through the message-passing layers.
  auto inc = build_incidence(lowered);
  Vec g_z(dim);
  Vec g_a(hidden);
  Vec input(2 * dim);
  for (std::size_t l = n_layers; l-- > 0;) {
    const EncoderLayer& layer = params.layers[l];
    EncoderLayer& layer_grad = g.layers[l];
    const std::vector<Vec>& h = trace.states.node_states[l];
    std::vector<Vec> node_grad_prev = node_grad;  // residual passthrough
    for (std::size_t v = 0; v < n_nodes; ++v) {
      if (inc[v].empty()) continue;
      const Vec& gv = node_grad[v];
      const Vec& t_v = trace.states.tanh_out[l][v];
      const Vec& a_v = trace.states.aggregates[l][v];
      for (std::size_t d = 0; d < dim; ++d) g_z[d] = gv[d] * (1.0 - t_v[d] * t_v[d]);
      // update transform grads
      for (std::size_t d = 0; d < dim; ++d) {
        layer_grad.b_update[d] += g_z[d];
        double* row = layer_grad.w_update.data() + d * hidden;
        for (std::size_t k = 0; k < hidden; ++k) row[k] += g_z[d] * a_v[k];
      }
      // g_a = W_u^T g_z
      std::fill(g_a.begin(), g_a.end(), 0.0);
      for (std::size_t d = 0; d < dim; ++d) {
        const double* row = layer.w_update.data() + d * hidden;
        for (std::size_t k = 0; k < hidden; ++k) g_a[k] += row[k] * g_z[d];
      }
      const double inv_deg = 1.0 / static_cast<double>(inc[v].size());
      // identical message gradient for every incident edge: g_m = g_a / deg
      for (const Incidence& in_edge : inc[v]) {
        std::copy(h[in_edge.neighbor].begin(), h[in_edge.neighbor].end(), input.begin());
        std::copy(lowered.edges[in_edge.edge].feature.begin(),
                  lowered.edges[in_edge.edge].feature.end(), input.begin() + dim);
        for (std::size_t k = 0; k < hidden; ++k) {
          const double g_m = g_a[k] * inv_deg;
          layer_grad.b_message[k] += g_m;
          double* row = layer_grad.w_message.data() + k * 2 * dim;
          for (std::size_t c = 0; c < 2 * dim; ++c) row[c] += g_m * input[c];
        }
        // neighbor state gradient through the first D message columns
        Vec& gh_u = node_grad_prev[in_edge.neighbor];
        for (std::size_t k = 0; k < hidden; ++k) {
          const double g_m = g_a[k] * inv_deg;
          const double* row = layer.w_message.data() + k * 2 * dim;
          for (std::size_t d = 0; d < dim; ++d) gh_u[d] += row[d] * g_m;
        }
      }
    }
    node_grad = std::move(node_grad_prev);
  }
  return fwd.loss;
}

namespace {

// Flat view over every tunable scalar: alpha first, then layer arrays in
// declaration order. Used by the finite-difference sweep.
std::vector<double*> parameter_slots(EncoderParams& p) {
  std::vector<double*> slots;
  slots.push_back(&p.alpha);
  for (EncoderLayer& layer : p.layers) {
    for (std::vector<double>* arr :
         {&layer.w_message, &layer.b_message, &layer.w_update, &layer.b_update}) {
      for (double& x : *arr) slots.push_back(&x);
    }
  }
  return slots;
}

std::vector<double> flatten_grads(const EncoderGrads& g) {
  std::vector<double> flat;
  flat.push_back(g.alpha);
  for (const EncoderLayer& layer : g.layers) {
    for (const std::vector<double>* arr :
         {&layer.w_message, &layer.b_message, &layer.w_update, &layer.b_update}) {
      flat.insert(flat.end(), arr->begin(), arr->end());
    }
  }
  return flat;
}

}  // namespace

Expected<double, EncoderError> grad_check(const SceneGraph& graph,
                                          const EmbeddingBackend& backend,
                                          const EncoderParams& params, const Denoiser& denoiser,
                                          const LossConfig& loss, double eps_fd) {
  if (params.dim > 16) return err("desk-scale", "grad_check requires dim <= 16");
  {
    auto lowered = lower(graph, backend);
    if (!lowered) return lowered.error();
    if (lowered->nodes.size() > 8) {
      return err("desk-scale", "grad_check requires <= 8 lowered nodes");
    }
  }

  EncoderGrads analytic;
  auto loss_value = sg_loss_with_grads(graph, backend, params, denoiser, loss, &analytic);
  if (!loss_value) return loss_value.error();
  std::vector<double> g_a = flatten_grads(analytic);

  EncoderParams probe = params;
  std::vector<double*> slots = parameter_slots(probe);
  if (slots.size() != g_a.size()) return dims_error("gradient/parameter count mismatch");

  double max_rel = 0.0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const double saved = *slots[i];
    *slots[i] = saved + eps_fd;
    auto up = sg_loss(graph, backend, probe, denoiser, loss);
    if (!up) return up.error();
    *slots[i] = saved - eps_fd;
    auto down = sg_loss(graph, backend, probe, denoiser, loss);
    if (!down) return down.error();
    *slots[i] = saved;
    const double g_fd = (up.value() - down.value()) / (2.0 * eps_fd);
    const double rel =
        std::abs(g_a[i] - g_fd) / std::max(1e-8, std::abs(g_a[i]) + std::abs(g_fd));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

// ---------------------------------------------------------------------------
// Emission.

std::string embedding_matrix_text(const SgEmbedding& embedding) {
  std::ostringstream out;
  char buf[40];
  for (const Vec& v : embedding.vectors) {
    for (std::size_t d = 0; d < v.size(); ++d) {
      std::snprintf(buf, sizeof(buf), "%.17g", v[d]);
      if (d > 0) out << ' ';
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::string embedding_provenance_text(const SgEmbedding& embedding) {
  std::ostringstream out;
  for (const ProvenanceTag& tag : embedding.tags) {
    out << (tag.kind == ProvenanceTag::triple ? 't' : 's') << tag.id << '\n';
  }
  return out.str();
}

}  // namespace sgkit
