#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "subsel/graph.hpp"
#include "subsel/rng.hpp"
#include "subsel/wl.hpp"

namespace subsel {

// Node-marked copy of a base graph: same connectivity, features X ⊕ χ_root.
// Nothing is copied; the marking channel is computed on demand.
struct MarkedSubgraph {
  const Graph* base = nullptr;
  NodeId root = 0;

  double marking(NodeId v) const { return v == root ? 1.0 : 0.0; }
};

// The original graph plus an ordered list of marked roots. Roots may repeat.
// The base graph must outlive the bag.
struct SubgraphBag {
  const Graph* base = nullptr;
  std::vector<NodeId> roots;

  SubgraphBag() = default;
  SubgraphBag(const Graph& g, std::vector<NodeId> r) : base(&g), roots(std::move(r)) {
    for (NodeId v : roots) {
      if (v >= g.num_nodes()) throw std::out_of_range("SubgraphBag: root out of range");
    }
  }

  const Graph& graph() const { return *base; }
  // The original graph counts as a member of the bag.
  std::size_t size() const { return roots.size() + 1; }
  static constexpr bool includes_original = true;

  MarkedSubgraph subgraph(std::size_t i) const { return {base, roots.at(i)}; }

  SubgraphBag with_root(NodeId v) const {
    auto next = roots;
    next.push_back(v);
    return SubgraphBag(*base, std::move(next));
  }
};

inline SubgraphBag full_bag(const Graph& g) {
  std::vector<NodeId> roots(g.num_nodes());
  for (NodeId v = 0; v < g.num_nodes(); ++v) roots[v] = v;
  return SubgraphBag(g, std::move(roots));
}

inline SubgraphBag random_policy(const Graph& g, std::size_t count, std::uint64_t seed,
                                 bool replacement) {
  if (count == 0) throw std::invalid_argument("random_policy: T must be >= 1");
  const std::size_t n = g.num_nodes();
  if (!replacement && count > n) {
    throw std::invalid_argument("random_policy: T exceeds node count without replacement");
  }
  Rng rng(seed);
  std::vector<NodeId> roots;
  roots.reserve(count);
  if (replacement) {
    for (std::size_t i = 0; i < count; ++i) roots.push_back(rng.below(n));
  } else {
    // Partial Fisher-Yates: the first `count` slots are a uniform sample.
    std::vector<NodeId> pool(n);
    for (NodeId v = 0; v < n; ++v) pool[v] = v;
    for (std::size_t i = 0; i < count; ++i) {
      std::swap(pool[i], pool[i + rng.below(n - i)]);
      roots.push_back(pool[i]);
    }
  }
  return SubgraphBag(g, std::move(roots));
}

// One root per component: its lowest node id.
inline SubgraphBag oracle_policy(const Graph& g, const ComponentPartition& partition) {
  std::vector<NodeId> roots(partition.count, g.num_nodes());
  for (NodeId v = g.num_nodes(); v-- > 0;) roots[partition.labels[v]] = v;
  return SubgraphBag(g, std::move(roots));
}

inline SubgraphBag oracle_policy(const Graph& g) {
  return oracle_policy(g, connected_components(g));
}

inline bool covers_all_components(const SubgraphBag& bag, const ComponentPartition& partition) {
  std::vector<bool> hit(partition.count, false);
  std::size_t covered = 0;
  for (NodeId v : bag.roots) {
    const auto c = partition.labels.at(v);
    if (!hit[c]) {
      hit[c] = true;
      ++covered;
    }
  }
  return covered == partition.count;
}

using CertificateSet = std::set<WLFingerprint>;

inline CertificateSet bag_certificate(const SubgraphBag& bag) {
  CertificateSet out;
  std::set<NodeId> seen;
  for (NodeId v : bag.roots) {
    if (seen.insert(v).second) out.insert(marked_certificate(bag.graph(), v));
  }
  return out;
}

// Reference certificate sets for a family of pairwise non-isomorphic graphs,
// one certificate per component of each member.
class FamilyIndex {
 public:
  explicit FamilyIndex(std::span<const Graph> family) {
    if (family.empty()) throw std::invalid_argument("FamilyIndex: empty family");
    for (const Graph& member : family) {
      references_.push_back(bag_certificate(oracle_policy(member)));
      components_.push_back(connected_components(member).count);
    }
    for (std::size_t i = 0; i < references_.size(); ++i) {
      for (std::size_t j = i + 1; j < references_.size(); ++j) {
        if (references_[i] == references_[j]) {
          throw std::invalid_argument("FamilyIndex: family members are isomorphic");
        }
      }
    }
  }

  std::size_t size() const { return references_.size(); }
  const CertificateSet& reference(std::size_t i) const { return references_.at(i); }

  // Index of the member isomorphic to g, if any.
  std::optional<std::size_t> member_of(const Graph& g) const {
    return match(bag_certificate(oracle_policy(g)));
  }

  // Index of the unique member whose reference set equals `certs`.
  std::optional<std::size_t> match(const CertificateSet& certs) const {
    std::optional<std::size_t> found;
    for (std::size_t i = 0; i < references_.size(); ++i) {
      if (references_[i] == certs) {
        if (found) return std::nullopt;
        found = i;
      }
    }
    return found;
  }

  bool identifies(const SubgraphBag& bag) const {
    const auto member = member_of(bag.graph());
    if (!member) throw std::invalid_argument("identifies: bag base is not a family member");
    const auto certs = bag_certificate(bag);
    if (certs.size() != components_[*member]) return false;
    return match(certs).has_value();
  }

 private:
  std::vector<CertificateSet> references_;
  std::vector<std::size_t> components_;
};

inline bool identifies(const SubgraphBag& bag, std::span<const Graph> family) {
  return FamilyIndex(family).identifies(bag);
}

}  // namespace subsel
