#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "subsel/graph.hpp"
#include "subsel/wl.hpp"

namespace subsel {

// Circulant skip-links graph: an n-cycle plus the chords of the orbit
// s_1 = 0, s_{i+1} = (s_i + k) mod n.
inline Graph make_csl(std::size_t n, std::size_t k) {
  if (n < 4 || k < 2 || k + 2 > n) {
    throw std::invalid_argument("make_csl: need 2 <= k <= n-2, got n=" + std::to_string(n) +
                                " k=" + std::to_string(k));
  }
  if (std::gcd(n, k) != 1) {
    throw std::invalid_argument("make_csl: n and k must be coprime, got n=" +
                                std::to_string(n) + " k=" + std::to_string(k));
  }
  std::vector<Edge> edges;
  edges.reserve(2 * n);
  for (NodeId j = 0; j < n; ++j) edges.emplace_back(j, (j + 1) % n);
  // gcd(n, k) = 1, so the orbit visits every node and closes after n steps.
  NodeId s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const NodeId next = (s + k) % n;
    edges.emplace_back(s, next);
    s = next;
  }
  // 2 <= k <= n-2 keeps chords off the cycle; coprimality rules out 2k = n,
  // so all 2n edges are distinct.
  return Graph(n, std::move(edges));
}

// Disjoint union of CSL(n, k_i); component i holds ids [i*n, (i+1)*n).
inline Graph make_nl_csl(std::size_t n, const std::vector<std::size_t>& skips) {
  if (skips.empty()) throw std::invalid_argument("make_nl_csl: need at least one skip");
  std::vector<Graph> parts;
  std::vector<WLFingerprint> certs;
  for (auto k : skips) {
    parts.push_back(make_csl(n, k));
    certs.push_back(marked_certificate(parts.back(), 0));
  }
  for (std::size_t i = 0; i < certs.size(); ++i) {
    for (std::size_t j = i + 1; j < certs.size(); ++j) {
      if (certs[i] == certs[j]) {
        throw std::invalid_argument("make_nl_csl: CSL(" + std::to_string(n) + "," +
                                    std::to_string(skips[i]) + ") and CSL(" +
                                    std::to_string(n) + "," + std::to_string(skips[j]) +
                                    ") are isomorphic");
      }
    }
  }
  return disjoint_union(parts);
}

}  // namespace subsel
