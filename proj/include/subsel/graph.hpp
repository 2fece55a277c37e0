#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace subsel {

using NodeId = std::size_t;
using Edge = std::pair<NodeId, NodeId>;

// Undirected simple graph with a dense n x c node feature matrix.
//
// Edges are kept twice: as a sorted list of (u, v) pairs with u < v and as
// sorted adjacency lists. Both are built once in the constructor, so a
// Graph is immutable and safe to share across threads.
class Graph {
 public:
  Graph(std::size_t num_nodes, std::vector<Edge> edges,
        std::vector<double> features, std::size_t channels)
      : num_nodes_(num_nodes), channels_(channels), features_(std::move(features)) {
    if (num_nodes_ == 0) throw std::invalid_argument("Graph: num_nodes must be >= 1");
    if (channels_ == 0) throw std::invalid_argument("Graph: need at least one feature channel");
    if (features_.size() != num_nodes_ * channels_) {
      throw std::invalid_argument("Graph: feature rows must equal num_nodes");
    }
    for (auto& [u, v] : edges) {
      if (u >= num_nodes_ || v >= num_nodes_) {
        throw std::invalid_argument("Graph: edge endpoint out of range");
      }
      if (u == v) throw std::invalid_argument("Graph: self-loop " + std::to_string(u));
      if (u > v) std::swap(u, v);
    }
    std::sort(edges.begin(), edges.end());
    if (std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
      throw std::invalid_argument("Graph: duplicate edge");
    }
    edges_ = std::move(edges);
    adjacency_.assign(num_nodes_, {});
    for (const auto& [u, v] : edges_) {
      adjacency_[u].push_back(v);
      adjacency_[v].push_back(u);
    }
    for (auto& nbrs : adjacency_) std::sort(nbrs.begin(), nbrs.end());
  }

  // Constant single-channel features (value 1.0 on every node).
  Graph(std::size_t num_nodes, std::vector<Edge> edges)
      : Graph(num_nodes, std::move(edges), std::vector<double>(num_nodes, 1.0), 1) {}

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t channels() const { return channels_; }

  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::vector<NodeId>>& adjacency() const { return adjacency_; }
  std::span<const NodeId> neighbors(NodeId v) const { return adjacency_.at(v); }

  const std::vector<double>& features() const { return features_; }
  double feature(NodeId v, std::size_t c) const { return features_[v * channels_ + c]; }

  bool has_edge(NodeId u, NodeId v) const {
    if (u > v) std::swap(u, v);
    return std::binary_search(edges_.begin(), edges_.end(), Edge{u, v});
  }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.num_nodes_ == b.num_nodes_ && a.channels_ == b.channels_ &&
           a.edges_ == b.edges_ && a.features_ == b.features_;
  }

 private:
  std::size_t num_nodes_;
  std::size_t channels_;
  std::vector<double> features_;
  std::vector<Edge> edges_;
  std::vector<std::vector<NodeId>> adjacency_;
};

inline std::size_t degree(const Graph& g, NodeId v) {
  if (v >= g.num_nodes()) throw std::out_of_range("degree: node id out of range");
  return g.neighbors(v).size();
}

inline std::size_t max_degree(const Graph& g) {
  std::size_t best = 0;
  for (const auto& nbrs : g.adjacency()) best = std::max(best, nbrs.size());
  return best;
}

struct ComponentPartition {
  std::vector<std::size_t> labels;
  std::size_t count = 0;

  std::vector<NodeId> members(std::size_t component) const {
    std::vector<NodeId> out;
    for (NodeId v = 0; v < labels.size(); ++v) {
      if (labels[v] == component) out.push_back(v);
    }
    return out;
  }
};

// Labels are assigned in order of each component's lowest node id.
inline ComponentPartition connected_components(const Graph& g) {
  constexpr auto unset = std::numeric_limits<std::size_t>::max();
  ComponentPartition part;
  part.labels.assign(g.num_nodes(), unset);
  std::vector<NodeId> stack;
  for (NodeId start = 0; start < g.num_nodes(); ++start) {
    if (part.labels[start] != unset) continue;
    const std::size_t label = part.count++;
    part.labels[start] = label;
    stack.push_back(start);
    while (!stack.empty()) {
      const NodeId v = stack.back();
      stack.pop_back();
      for (NodeId u : g.neighbors(v)) {
        if (part.labels[u] == unset) {
          part.labels[u] = label;
          stack.push_back(u);
        }
      }
    }
  }
  return part;
}

// Node v of g becomes node perm[v] of the result; features move with it.
inline Graph permute(const Graph& g, std::span<const NodeId> perm) {
  const std::size_t n = g.num_nodes();
  if (perm.size() != n) throw std::invalid_argument("permute: permutation size mismatch");
  std::vector<bool> seen(n, false);
  for (NodeId p : perm) {
    if (p >= n || seen[p]) throw std::invalid_argument("permute: not a permutation");
    seen[p] = true;
  }
  std::vector<Edge> edges;
  edges.reserve(g.num_edges());
  for (const auto& [u, v] : g.edges()) edges.emplace_back(perm[u], perm[v]);
  const std::size_t c = g.channels();
  std::vector<double> features(n * c);
  for (NodeId v = 0; v < n; ++v) {
    for (std::size_t k = 0; k < c; ++k) features[perm[v] * c + k] = g.feature(v, k);
  }
  return Graph(n, std::move(edges), std::move(features), c);
}

// Component i occupies node ids [offset_i, offset_i + n_i).
inline Graph disjoint_union(std::span<const Graph> parts) {
  if (parts.empty()) throw std::invalid_argument("disjoint_union: no parts");
  const std::size_t c = parts.front().channels();
  std::size_t n = 0;
  std::vector<Edge> edges;
  std::vector<double> features;
  for (const Graph& part : parts) {
    if (part.channels() != c) throw std::invalid_argument("disjoint_union: channel mismatch");
    for (const auto& [u, v] : part.edges()) edges.emplace_back(u + n, v + n);
    features.insert(features.end(), part.features().begin(), part.features().end());
    n += part.num_nodes();
  }
  return Graph(n, std::move(edges), std::move(features), c);
}

inline Graph path_graph(std::size_t n) {
  std::vector<Edge> edges;
  for (NodeId v = 0; v + 1 < n; ++v) edges.emplace_back(v, v + 1);
  return Graph(n, std::move(edges));
}

// Center is node 0.
inline Graph star_graph(std::size_t leaves) {
  std::vector<Edge> edges;
  for (NodeId v = 1; v <= leaves; ++v) edges.emplace_back(0, v);
  return Graph(leaves + 1, std::move(edges));
}

}  // namespace subsel
