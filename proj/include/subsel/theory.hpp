#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "subsel/bags.hpp"
#include "subsel/gnn.hpp"
#include "subsel/graph.hpp"
#include "subsel/rng.hpp"
#include "subsel/tensor.hpp"
#include "subsel/wl.hpp"

namespace subsel {

// Four GraphConv layers (2->2, 2->2, 2->2, 2->1) with min pooling over the
// bag. Channel 0 tracks "degree > d", channel 1 carries the root indicator.
struct DegreePolicyNet {
  std::array<GraphConvParams, 4> layers;
  int threshold = 1;
  Pool pool = Pool::Min;
};

namespace detail {

// Builds a GraphConv layer from out x in matrices (the usual W * h layout)
// and stores them transposed.
inline GraphConvParams graphconv_from(const std::string& name, const Tensor& w1,
                                      const Tensor& w2, std::vector<double> b) {
  auto transpose = [](const Tensor& t) {
    Tensor out(t.cols(), t.rows());
    for (std::size_t i = 0; i < t.rows(); ++i)
      for (std::size_t j = 0; j < t.cols(); ++j) out(j, i) = t(i, j);
    return out;
  };
  const std::size_t outs = b.size();
  return GraphConvParams{{name + ".w1", transpose(w1)},
                         {name + ".w2", transpose(w2)},
                         {name + ".b", Tensor(1, outs, std::move(b))}};
}

}  // namespace detail

inline DegreePolicyNet build_degree_policy_weights(int d) {
  if (d < 1) throw std::invalid_argument("build_degree_policy_weights: d must be >= 1");
  const Tensor zero22(2, 2);
  DegreePolicyNet net;
  net.threshold = d;
  net.layers[0] = detail::graphconv_from("degree.0", Tensor::from_rows({{0, 0}, {0, 1}}),
                                         Tensor::from_rows({{1, 0}, {0, 0}}),
                                         {-static_cast<double>(d), 0.0});
  for (std::size_t l = 1; l <= 2; ++l) {
    net.layers[l] = detail::graphconv_from("degree." + std::to_string(l),
                                           Tensor::from_rows({{-1, 0}, {0, 1}}), zero22, {1, 0});
  }
  net.layers[3] = detail::graphconv_from("degree.3", Tensor::from_rows({{1, -1}}),
                                         Tensor(1, 2), {0.0});
  return net;
}

// Direct loop-level trace of the four layers and the min pooling, without
// the tape. Returns one score per node: 1 iff degree(v) > d and v was never
// selected, otherwise 0.
inline Tensor verify_degree_policy(const Graph& g, int d, const std::set<NodeId>& selected) {
  const DegreePolicyNet net = build_degree_policy_weights(d);
  const std::size_t n = g.num_nodes();
  std::vector<std::optional<NodeId>> roots{std::nullopt};
  for (NodeId v : selected) {
    if (v >= n) throw std::out_of_range("verify_degree_policy: selected node out of range");
    roots.emplace_back(v);
  }
  Tensor scores(n, 1, 1.0);
  bool first = true;
  for (const auto& root : roots) {
    // h is n x channels, starting at (1, id_v).
    std::vector<std::vector<double>> h(n, std::vector<double>{1.0, 0.0});
    if (root) h[*root][1] = 1.0;
    for (const auto& layer : net.layers) {
      const Tensor& w1 = layer.w_self.value;  // in x out
      const Tensor& w2 = layer.w_neigh.value;
      const Tensor& b = layer.bias.value;
      std::vector<std::vector<double>> next(n, std::vector<double>(b.cols(), 0.0));
      for (NodeId v = 0; v < n; ++v) {
        std::vector<double> agg(h[v].size(), 0.0);
        for (NodeId u : g.neighbors(v))
          for (std::size_t k = 0; k < agg.size(); ++k) agg[k] += h[u][k];
        for (std::size_t o = 0; o < b.cols(); ++o) {
          double z = b(0, o);
          for (std::size_t k = 0; k < h[v].size(); ++k) z += w1(k, o) * h[v][k] + w2(k, o) * agg[k];
          next[v][o] = z > 0.0 ? z : 0.0;
        }
      }
      h = std::move(next);
    }
    for (NodeId v = 0; v < n; ++v) scores[v] = first ? h[v][0] : std::min(scores[v], h[v][0]);
    first = false;
  }
  return scores;
}

// Same computation through the generic encoder and pooling of the GNN layer
// code, on the tape.
inline Tensor degree_policy_forward(const Graph& g, DegreePolicyNet& net,
                                    const std::set<NodeId>& selected) {
  Tape tape;
  Context ctx(tape);
  const std::vector<NodeId> roots(selected.begin(), selected.end());
  const SubgraphBag bag(g, roots);
  std::vector<EncoderLayer> layers(net.layers.begin(), net.layers.end());
  const Var ones = ctx.constant(Tensor(g.num_nodes(), 1, 1.0));
  std::vector<Var> per_subgraph;
  for (const Var& marking : bag_markings(ctx, bag)) {
    per_subgraph.push_back(encode(ctx, concat_cols(ones, marking), g.adjacency(), layers));
  }
  return pool_subgraphs(per_subgraph, net.pool).value();
}

// Idealized selection network for (n, l)-CSL graphs. Each step refines the
// current bag; a node is excluded once, in some subgraph of the bag, its
// marked color differs from the color it has in the unmarked graph after
// the same number of rounds (it sits in an already marked component). The
// next root is uniform over the remaining nodes.
inline SubgraphBag wl_oracle_selector(const Graph& g, std::size_t steps, std::uint64_t seed) {
  const std::size_t n = g.num_nodes();
  Rng rng(seed);
  std::vector<NodeId> roots;
  std::vector<bool> excluded(n, false);
  const std::vector<std::size_t> plain(n, 0);
  for (std::size_t t = 0; t < steps; ++t) {
    if (!roots.empty()) {
      const auto marked = wl_refine(g, marked_init(g, roots.back()));
      const auto reference = wl_refine_rounds(g, plain, marked.rounds);
      for (NodeId v = 0; v < n; ++v) {
        if (marked.global[v] != reference.global[v]) excluded[v] = true;
      }
    }
    std::vector<NodeId> candidates;
    for (NodeId v = 0; v < n; ++v)
      if (!excluded[v]) candidates.push_back(v);
    if (candidates.empty()) {
      throw std::invalid_argument("wl_oracle_selector: T exceeds the number of components");
    }
    roots.push_back(candidates[rng.below(candidates.size())]);
  }
  return SubgraphBag(g, std::move(roots));
}

}  // namespace subsel
