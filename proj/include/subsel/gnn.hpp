#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "subsel/bags.hpp"
#include "subsel/graph.hpp"
#include "subsel/rng.hpp"
#include "subsel/tensor.hpp"

namespace subsel {

// ---------------------------------------------------------------------------
// Parameter structs. Weight matrices are stored in x out so that a layer
// computes h * W for row-major node features h.

struct Linear {
  Parameter weight;
  Parameter bias;  // 1 x out
};

// Two linear layers with a ReLU between them.
struct Mlp {
  Linear first;
  Linear second;
};

struct GINLayerParams {
  double epsilon = 0.0;
  Mlp mlp;
};

struct GraphConvParams {
  Parameter w_self;   // the W1 term
  Parameter w_neigh;  // the W2 term
  Parameter bias;
};

using EncoderLayer = std::variant<GINLayerParams, GraphConvParams>;

enum class Pool { Mean, Min };

enum class Mode { Train, Eval };

struct NetworkPlan {
  std::size_t layers = 3;
  std::size_t width = 16;
};

inline std::size_t output_width(const EncoderLayer& layer) {
  if (const auto* gin = std::get_if<GINLayerParams>(&layer)) {
    return gin->mlp.second.weight.value.cols();
  }
  return std::get<GraphConvParams>(layer).w_self.value.cols();
}

inline void collect(Linear& lin, std::vector<Parameter*>& out) {
  out.push_back(&lin.weight);
  out.push_back(&lin.bias);
}

inline void collect(Mlp& mlp, std::vector<Parameter*>& out) {
  collect(mlp.first, out);
  collect(mlp.second, out);
}

inline void collect(EncoderLayer& layer, std::vector<Parameter*>& out) {
  if (auto* gin = std::get_if<GINLayerParams>(&layer)) {
    collect(gin->mlp, out);
  } else {
    auto& gc = std::get<GraphConvParams>(layer);
    out.push_back(&gc.w_self);
    out.push_back(&gc.w_neigh);
    out.push_back(&gc.bias);
  }
}

// Uniform(-1/sqrt(in), 1/sqrt(in)) for weights and biases.
inline Linear make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear lin{{name + ".weight", Tensor(in, out)}, {name + ".bias", Tensor(1, out)}};
  for (auto& w : lin.weight.value.data()) w = (2.0 * rng.uniform01() - 1.0) * bound;
  for (auto& b : lin.bias.value.data()) b = (2.0 * rng.uniform01() - 1.0) * bound;
  return lin;
}

inline Mlp make_mlp(const std::string& name, std::size_t in, std::size_t hidden,
                    std::size_t out, Rng& rng) {
  return Mlp{make_linear(name + ".lin0", in, hidden, rng),
             make_linear(name + ".lin1", hidden, out, rng)};
}

inline GINLayerParams make_gin(const std::string& name, std::size_t in, std::size_t out,
                               Rng& rng) {
  return GINLayerParams{0.0, make_mlp(name + ".mlp", in, out, out, rng)};
}

// ---------------------------------------------------------------------------
// Forward context: one tape per pass, each Parameter bound to a single leaf.

class Context {
 public:
  explicit Context(Tape& tape) : tape_(tape) {}

  Tape& tape() { return tape_; }

  Var bind(Parameter& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return it->second;
    const Var v = tape_.param(p);
    bound_.emplace(&p, v);
    return v;
  }

  Var constant(Tensor t) { return tape_.constant(std::move(t)); }

 private:
  Tape& tape_;
  std::unordered_map<const Parameter*, Var> bound_;
};

inline Var apply(Context& ctx, Linear& lin, Var x) {
  return add_bias(matmul(x, ctx.bind(lin.weight)), ctx.bind(lin.bias));
}

inline Var apply(Context& ctx, Mlp& mlp, Var x) {
  return apply(ctx, mlp.second, relu(apply(ctx, mlp.first, x)));
}

using Adjacency = std::vector<std::vector<NodeId>>;

// h'_v = MLP((1 + eps) h_v + sum_{u ~ v} h_u)
inline Var gin_layer(Context& ctx, Var h, const Adjacency& adj, GINLayerParams& params) {
  const std::size_t in = params.mlp.first.weight.value.rows();
  if (h.cols() != in) {
    throw std::invalid_argument("gin_layer: expected " + std::to_string(in) + " channels, got " +
                                std::to_string(h.cols()));
  }
  const Var agg = add(scale(h, 1.0 + params.epsilon), neighbor_sum(h, adj));
  return apply(ctx, params.mlp, agg);
}

// h'_v = ReLU(W1 h_v + W2 sum_{u ~ v} h_u + b)
inline Var graphconv_layer(Context& ctx, Var h, const Adjacency& adj, GraphConvParams& params) {
  if (h.cols() != params.w_self.value.rows() || h.cols() != params.w_neigh.value.rows()) {
    throw std::invalid_argument("graphconv_layer: channel mismatch");
  }
  const Var self = matmul(h, ctx.bind(params.w_self));
  const Var nbr = matmul(neighbor_sum(h, adj), ctx.bind(params.w_neigh));
  return relu(add_bias(add(self, nbr), ctx.bind(params.bias)));
}

inline Var apply_layer(Context& ctx, Var h, const Adjacency& adj, EncoderLayer& layer) {
  if (auto* gin = std::get_if<GINLayerParams>(&layer)) return gin_layer(ctx, h, adj, *gin);
  return graphconv_layer(ctx, h, adj, std::get<GraphConvParams>(layer));
}

// Plain stack of layers. GIN outputs get a ReLU between layers; GraphConv
// carries its own.
inline Var encode(Context& ctx, Var h, const Adjacency& adj, std::span<EncoderLayer> layers) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = apply_layer(ctx, h, adj, layers[l]);
    if (l + 1 < layers.size() && std::holds_alternative<GINLayerParams>(layers[l])) h = relu(h);
  }
  return h;
}

inline Var pool_subgraphs(std::span<const Var> per_subgraph, Pool pool) {
  return pool == Pool::Mean ? mean_of(per_subgraph) : min_of(per_subgraph);
}

inline Tensor feature_matrix(const Graph& g) {
  return Tensor(g.num_nodes(), g.channels(), g.features());
}

inline Tensor one_hot(std::size_t n, NodeId v) {
  Tensor t(n, 1);
  t[v] = 1.0;
  return t;
}

// Marking channels for a bag: zeros for the original graph, then one-hot
// columns for every root.
inline std::vector<Var> bag_markings(Context& ctx, const SubgraphBag& bag) {
  const std::size_t n = bag.graph().num_nodes();
  std::vector<Var> out{ctx.constant(Tensor(n, 1))};
  for (NodeId v : bag.roots) out.push_back(ctx.constant(one_hot(n, v)));
  return out;
}

// Decoupled marking / feature propagation on every subgraph independently:
//   p^(l) = f_p(p^(l-1)),  h^(l) = f_h(h^(l-1) ⊕ p^(l-1)),  out = p^(L) + h^(L).
// Both tracks share one width; the first f_h layer sees c_in + 1 channels.
inline std::vector<Var> ds_forward(Context& ctx, const Graph& g, std::span<const Var> markings,
                                   std::span<EncoderLayer> fp_layers,
                                   std::span<EncoderLayer> fh_layers) {
  if (markings.empty()) throw std::invalid_argument("ds_forward: empty bag");
  if (fp_layers.size() != fh_layers.size() || fp_layers.empty()) {
    throw std::invalid_argument("ds_forward: marking and feature tracks need equal, nonzero depth");
  }
  if (output_width(fp_layers.back()) != output_width(fh_layers.back())) {
    throw std::invalid_argument("ds_forward: track widths differ at the last layer");
  }
  const Adjacency& adj = g.adjacency();
  const Var features = ctx.constant(feature_matrix(g));
  const std::size_t depth = fp_layers.size();
  std::vector<Var> out;
  out.reserve(markings.size());
  for (const Var& marking : markings) {
    Var p = marking;
    Var h = features;
    for (std::size_t l = 0; l < depth; ++l) {
      Var p_next = apply_layer(ctx, p, adj, fp_layers[l]);
      Var h_next = apply_layer(ctx, concat_cols(h, p), adj, fh_layers[l]);
      if (l + 1 < depth) {
        if (std::holds_alternative<GINLayerParams>(fp_layers[l])) p_next = relu(p_next);
        if (std::holds_alternative<GINLayerParams>(fh_layers[l])) h_next = relu(h_next);
      }
      p = p_next;
      h = h_next;
    }
    out.push_back(add(p, h));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Selection network f.

struct SelectionNetParams {
  std::vector<EncoderLayer> fp_layers;
  std::vector<EncoderLayer> fh_layers;
  Mlp head;  // width -> width -> 1
  double tau = 1.0;
  double logit_dropout = 0.0;
  bool mask_selected = false;
  Pool pool = Pool::Mean;

  std::size_t depth() const { return fp_layers.size(); }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& l : fp_layers) collect(l, out);
    for (auto& l : fh_layers) collect(l, out);
    collect(head, out);
    return out;
  }
};

inline SelectionNetParams make_selection_net(const NetworkPlan& plan, std::size_t in_channels,
                                             Rng& rng, const std::string& prefix = "f") {
  if (plan.layers == 0 || plan.width == 0) {
    throw std::invalid_argument("make_selection_net: layers and width must be positive");
  }
  SelectionNetParams net;
  for (std::size_t l = 0; l < plan.layers; ++l) {
    const std::size_t p_in = l == 0 ? 1 : plan.width;
    const std::size_t h_in = l == 0 ? in_channels + 1 : 2 * plan.width;
    net.fp_layers.emplace_back(make_gin(prefix + ".fp." + std::to_string(l), p_in, plan.width, rng));
    net.fh_layers.emplace_back(make_gin(prefix + ".fh." + std::to_string(l), h_in, plan.width, rng));
  }
  net.head = make_mlp(prefix + ".head", plan.width, plan.width, 1, rng);
  return net;
}

// n x 1 un-normalized scores for the next root.
inline Var selection_logits(Context& ctx, const Graph& g, std::span<const Var> markings,
                            SelectionNetParams& params) {
  auto per_subgraph = ds_forward(ctx, g, markings, params.fp_layers, params.fh_layers);
  return apply(ctx, params.head, pool_subgraphs(per_subgraph, params.pool));
}

inline Tensor selection_logits(const SubgraphBag& bag, SelectionNetParams& params) {
  Tape tape;
  Context ctx(tape);
  return selection_logits(ctx, bag.graph(), bag_markings(ctx, bag), params).value();
}

// ---------------------------------------------------------------------------
// Straight-through Gumbel-Softmax.

inline constexpr double kMaskedLogit = -1e9;

inline Tensor draw_gumbel(std::size_t n, Rng& rng) {
  Tensor g(n, 1);
  for (auto& x : g.data()) x = -std::log(-std::log(rng.uniform_open()));
  return g;
}

// Lowest index wins exact ties.
inline std::size_t argmax_index(const Tensor& t) {
  if (t.size() == 0) throw std::invalid_argument("argmax_index: empty tensor");
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] > t[best]) best = i;
  return best;
}

struct GumbelSample {
  Var one_hot;
  NodeId choice = 0;
  Tensor soft;  // softmax((logits + g) / tau), masked entries exactly 0
};

// `mask[i] == true` excludes node i. With `forced` the hard choice is fixed
// instead of taken from the argmax; with `reference` the forward value
// becomes hard + (soft - reference) (see straight_through).
inline GumbelSample gumbel_softmax_st(Var logits, double tau, const Tensor& noise,
                                      const std::vector<bool>& mask,
                                      std::optional<NodeId> forced = std::nullopt,
                                      const std::optional<Tensor>& reference = std::nullopt) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax_st: tau must be positive");
  const std::size_t n = logits.rows();
  if (logits.cols() != 1 || noise.rows() != n || noise.cols() != 1) {
    throw std::invalid_argument("gumbel_softmax_st: expected n x 1 logits and noise");
  }
  Tape& tape = *logits.tape;
  Var masked = logits;
  if (!mask.empty()) {
    if (mask.size() != n) throw std::invalid_argument("gumbel_softmax_st: mask size mismatch");
    bool any_open = false;
    for (bool m : mask) any_open = any_open || !m;
    if (!any_open) throw std::invalid_argument("gumbel_softmax_st: every node is masked");
    masked = mask_fill(logits, mask, kMaskedLogit);
  }
  const Var soft = softmax(scale(add(masked, tape.constant(noise)), 1.0 / tau), 0);
  GumbelSample out;
  out.soft = soft.value();
  out.choice = forced ? *forced : argmax_index(out.soft);
  if (out.choice >= n) throw std::out_of_range("gumbel_softmax_st: forced choice out of range");
  out.one_hot = straight_through(one_hot(n, out.choice), soft, reference);
  return out;
}

inline GumbelSample gumbel_softmax_st(Var logits, double tau, Rng& rng,
                                      const std::vector<bool>& mask = {}) {
  return gumbel_softmax_st(logits, tau, draw_gumbel(logits.rows(), rng), mask);
}

// Logit dropout: every node is dropped with probability p; all-dropped masks
// are redrawn. Nodes already excluded by `base` stay excluded.
inline std::vector<bool> dropout_mask(std::size_t n, double p, Rng& rng,
                                      const std::vector<bool>& base = {}) {
  std::vector<bool> mask = base.empty() ? std::vector<bool>(n, false) : base;
  if (p <= 0.0) return mask;
  bool any_base_open = false;
  for (bool m : mask) any_base_open = any_base_open || !m;
  if (!any_base_open) return mask;
  for (;;) {
    std::vector<bool> trial = mask;
    bool open = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!trial[i] && rng.bernoulli(p)) trial[i] = true;
      open = open || !trial[i];
    }
    if (open) return trial;
  }
}

inline std::vector<bool> selected_mask(std::size_t n, std::span<const NodeId> roots) {
  std::vector<bool> mask(n, false);
  for (NodeId v : roots) mask.at(v) = true;
  return mask;
}

// Frozen randomness for one selection step, so that a pipeline run can be
// replayed exactly (used for finite-difference checks).
struct StepRecord {
  NodeId choice = 0;
  Tensor noise;
  std::vector<bool> mask;
  Tensor soft;
};

struct StepResult {
  NodeId choice = 0;
  Var marking;
  StepRecord record;
};

// One iteration of the selection loop on the bag given by `markings`.
// Train: logit dropout, fresh Gumbel noise, straight-through one-hot.
// Eval: argmax of the logits, constant one-hot.
inline StepResult select_step(Context& ctx, const Graph& g, std::span<const Var> markings,
                              std::span<const NodeId> roots, SelectionNetParams& params,
                              Mode mode, Rng& rng, const StepRecord* replay = nullptr) {
  const std::size_t n = g.num_nodes();
  const Var logits = selection_logits(ctx, g, markings, params);
  std::vector<bool> base = params.mask_selected ? selected_mask(n, roots) : std::vector<bool>{};
  if (!base.empty()) {
    bool open = false;
    for (bool m : base) open = open || !m;
    if (!open) base.clear();  // every node already selected; fall back to unmasked
  }
  StepResult out;
  if (mode == Mode::Eval) {
    Tensor scores = logits.value();
    for (std::size_t i = 0; i < base.size(); ++i)
      if (base[i]) scores[i] = kMaskedLogit;
    out.choice = argmax_index(scores);
    out.marking = ctx.constant(one_hot(n, out.choice));
    out.record.choice = out.choice;
    out.record.mask = base;
    return out;
  }
  if (replay) {
    auto sample = gumbel_softmax_st(logits, params.tau, replay->noise, replay->mask,
                                    replay->choice, replay->soft);
    out.choice = sample.choice;
    out.marking = sample.one_hot;
    out.record = *replay;
    return out;
  }
  StepRecord rec;
  rec.mask = dropout_mask(n, params.logit_dropout, rng, base);
  bool any = false;
  for (bool m : rec.mask) any = any || m;
  if (!any) rec.mask.clear();
  rec.noise = draw_gumbel(n, rng);
  auto sample = gumbel_softmax_st(logits, params.tau, rec.noise, rec.mask);
  rec.choice = sample.choice;
  rec.soft = sample.soft;
  out.choice = sample.choice;
  out.marking = sample.one_hot;
  out.record = std::move(rec);
  return out;
}

// Convenience overload on a materialized bag.
inline NodeId select_step(const SubgraphBag& bag, SelectionNetParams& params, Mode mode,
                          std::uint64_t seed) {
  Tape tape;
  Context ctx(tape);
  Rng rng(seed);
  return select_step(ctx, bag.graph(), bag_markings(ctx, bag), bag.roots, params, mode, rng)
      .choice;
}

// ---------------------------------------------------------------------------
// Prediction network g.

struct PredictionNetParams {
  std::vector<EncoderLayer> gp_layers;
  std::vector<EncoderLayer> gh_layers;
  Mlp readout;  // width -> width -> output_dim
  bool pool_nodes = true;

  std::size_t depth() const { return gp_layers.size(); }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& l : gp_layers) collect(l, out);
    for (auto& l : gh_layers) collect(l, out);
    collect(readout, out);
    return out;
  }
};

inline PredictionNetParams make_prediction_net(const NetworkPlan& plan, std::size_t in_channels,
                                               std::size_t output_dim, Rng& rng,
                                               const std::string& prefix = "g") {
  if (plan.layers == 0 || plan.width == 0 || output_dim == 0) {
    throw std::invalid_argument("make_prediction_net: sizes must be positive");
  }
  PredictionNetParams net;
  for (std::size_t l = 0; l < plan.layers; ++l) {
    const std::size_t p_in = l == 0 ? 1 : plan.width;
    const std::size_t h_in = l == 0 ? in_channels + 1 : 2 * plan.width;
    net.gp_layers.emplace_back(make_gin(prefix + ".gp." + std::to_string(l), p_in, plan.width, rng));
    net.gh_layers.emplace_back(make_gin(prefix + ".gh." + std::to_string(l), h_in, plan.width, rng));
  }
  net.readout = make_mlp(prefix + ".readout", plan.width, plan.width, output_dim, rng);
  return net;
}

// Mean over subgraphs, then mean over nodes, then the readout MLP.
// Result is 1 x output_dim (n x output_dim when pool_nodes is false).
inline Var predict(Context& ctx, const Graph& g, std::span<const Var> markings,
                   PredictionNetParams& params) {
  auto per_subgraph = ds_forward(ctx, g, markings, params.gp_layers, params.gh_layers);
  Var pooled = mean_of(per_subgraph);
  if (params.pool_nodes) pooled = mean(pooled, 0);
  return apply(ctx, params.readout, pooled);
}

inline Tensor predict(const SubgraphBag& bag, PredictionNetParams& params) {
  Tape tape;
  Context ctx(tape);
  return predict(ctx, bag.graph(), bag_markings(ctx, bag), params).value();
}

// ---------------------------------------------------------------------------
// The full selection + prediction feedforward.

struct PipelineResult {
  Var output;
  std::vector<NodeId> roots;
  std::vector<StepRecord> steps;
  std::size_t selection_messages = 0;
};

// Starts from the bag {G}, selects `steps` roots with f, and feeds the final
// bag to g. `replay` fixes every step's randomness and choice.
inline PipelineResult run_pipeline(Context& ctx, const Graph& g, SelectionNetParams& f,
                                   PredictionNetParams& pred, std::size_t steps, Mode mode,
                                   Rng& rng, const std::vector<StepRecord>* replay = nullptr) {
  if (replay && replay->size() != steps) {
    throw std::invalid_argument("run_pipeline: replay length must equal the step count");
  }
  const std::size_t n = g.num_nodes();
  const std::size_t messages_before = ctx.tape().messages();
  std::vector<Var> markings{ctx.constant(Tensor(n, 1))};
  PipelineResult out;
  for (std::size_t t = 0; t < steps; ++t) {
    auto step = select_step(ctx, g, markings, out.roots, f, mode, rng,
                            replay ? &(*replay)[t] : nullptr);
    markings.push_back(step.marking);
    out.roots.push_back(step.choice);
    out.steps.push_back(std::move(step.record));
  }
  out.selection_messages = ctx.tape().messages() - messages_before;
  out.output = predict(ctx, g, markings, pred);
  return out;
}

}  // namespace subsel
