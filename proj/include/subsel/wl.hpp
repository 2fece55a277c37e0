#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "subsel/graph.hpp"

namespace subsel {

// Process-wide table mapping canonical color strings to dense ids. It is the
// only shared mutable state of the refinement code.
class ColorTable {
 public:
  static ColorTable& global() {
    static ColorTable table;
    return table;
  }

  std::vector<std::size_t> intern_all(const std::vector<std::string>& keys) {
    std::lock_guard lock(mutex_);
    std::vector<std::size_t> ids;
    ids.reserve(keys.size());
    for (const auto& key : keys) ids.push_back(intern_locked(key));
    return ids;
  }

  std::size_t intern(const std::string& key) {
    std::lock_guard lock(mutex_);
    return intern_locked(key);
  }

  std::string name(std::size_t id) const {
    std::lock_guard lock(mutex_);
    return names_.at(id);
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return names_.size();
  }

 private:
  std::size_t intern_locked(const std::string& key) {
    auto [it, inserted] = ids_.try_emplace(key, names_.size());
    if (inserted) names_.push_back(key);
    return it->second;
  }

  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::size_t> ids_;
  std::vector<std::string> names_;
};

struct Coloring {
  std::vector<std::size_t> colors;  // dense per-graph ids, ordered by global id
  std::vector<std::size_t> global;  // ids in ColorTable::global()
  std::size_t rounds = 0;

  std::size_t num_colors() const {
    std::size_t m = 0;
    for (auto c : colors) m = std::max(m, c + 1);
    return m;
  }
};

// Sorted (color string, multiplicity) pairs. Equal fingerprints compare equal
// byte-for-byte.
struct WLFingerprint {
  std::vector<std::pair<std::string, std::size_t>> histogram;

  friend auto operator<=>(const WLFingerprint&, const WLFingerprint&) = default;
  friend bool operator==(const WLFingerprint&, const WLFingerprint&) = default;
};

namespace detail {

inline std::size_t count_distinct(std::vector<std::size_t> ids) {
  std::sort(ids.begin(), ids.end());
  return static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());
}

inline std::vector<std::size_t> intern_initial(std::span<const std::size_t> init) {
  std::vector<std::string> keys;
  keys.reserve(init.size());
  for (auto c : init) keys.push_back("#" + std::to_string(c));
  return ColorTable::global().intern_all(keys);
}

inline std::vector<std::size_t> refine_round(const Graph& g,
                                             const std::vector<std::size_t>& current) {
  std::vector<std::string> keys(g.num_nodes());
  std::vector<std::size_t> nbr;
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    nbr.clear();
    for (NodeId u : g.neighbors(v)) nbr.push_back(current[u]);
    std::sort(nbr.begin(), nbr.end());
    std::string key = "(" + std::to_string(current[v]) + "|";
    for (std::size_t i = 0; i < nbr.size(); ++i) {
      if (i) key += ',';
      key += std::to_string(nbr[i]);
    }
    key += ')';
    keys[v] = std::move(key);
  }
  return ColorTable::global().intern_all(keys);
}

inline Coloring make_coloring(std::vector<std::size_t> global, std::size_t rounds) {
  std::vector<std::size_t> sorted = global;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  Coloring out;
  out.colors.reserve(global.size());
  for (auto id : global) {
    out.colors.push_back(static_cast<std::size_t>(
        std::lower_bound(sorted.begin(), sorted.end(), id) - sorted.begin()));
  }
  out.global = std::move(global);
  out.rounds = rounds;
  return out;
}

inline WLFingerprint histogram_of(std::span<const std::size_t> global) {
  std::map<std::size_t, std::size_t> counts;
  for (auto id : global) ++counts[id];
  WLFingerprint fp;
  for (const auto& [id, mult] : counts) {
    fp.histogram.emplace_back(ColorTable::global().name(id), mult);
  }
  std::sort(fp.histogram.begin(), fp.histogram.end());
  return fp;
}

inline void check_init(const Graph& g, std::span<const std::size_t> init) {
  if (init.size() != g.num_nodes()) {
    throw std::invalid_argument("wl: initial coloring must have one entry per node");
  }
}

}  // namespace detail

// Runs exactly `rounds` refinement iterations without the stability check.
inline Coloring wl_refine_rounds(const Graph& g, std::span<const std::size_t> init,
                                 std::size_t rounds) {
  detail::check_init(g, init);
  auto current = detail::intern_initial(init);
  for (std::size_t r = 0; r < rounds; ++r) current = detail::refine_round(g, current);
  return detail::make_coloring(std::move(current), rounds);
}

// Refines until the number of color classes stops growing, at most n rounds.
// Colors carry their full history, so the returned coloring is the one
// produced by the round that first failed to split a class.
inline Coloring wl_refine(const Graph& g, std::span<const std::size_t> init) {
  detail::check_init(g, init);
  auto current = detail::intern_initial(init);
  std::size_t classes = detail::count_distinct(current);
  std::size_t rounds = 0;
  while (rounds < g.num_nodes()) {
    current = detail::refine_round(g, current);
    ++rounds;
    const std::size_t next_classes = detail::count_distinct(current);
    if (next_classes == classes) break;
    classes = next_classes;
  }
  return detail::make_coloring(std::move(current), rounds);
}

inline Coloring wl_refine(const Graph& g) {
  const std::vector<std::size_t> init(g.num_nodes(), 0);
  return wl_refine(g, init);
}

inline WLFingerprint fingerprint(const Graph& g, std::span<const std::size_t> init) {
  return detail::histogram_of(wl_refine(g, init).global);
}

inline WLFingerprint fingerprint(const Graph& g) {
  const std::vector<std::size_t> init(g.num_nodes(), 0);
  return fingerprint(g, init);
}

// Refines the disjoint union so both graphs share every round, then compares
// the two halves' histograms.
inline bool wl_distinguish(const Graph& g1, const Graph& g2) {
  if (g1.num_nodes() != g2.num_nodes()) return true;
  std::vector<Edge> edges = g1.edges();
  for (const auto& [u, v] : g2.edges()) {
    edges.emplace_back(u + g1.num_nodes(), v + g1.num_nodes());
  }
  const Graph joint(g1.num_nodes() + g2.num_nodes(), std::move(edges));
  const auto coloring = wl_refine(joint);
  const std::span<const std::size_t> all(coloring.global);
  return detail::histogram_of(all.first(g1.num_nodes())) !=
         detail::histogram_of(all.subspan(g1.num_nodes()));
}

inline std::vector<std::size_t> marked_init(const Graph& g, NodeId v) {
  if (v >= g.num_nodes()) throw std::out_of_range("marked_init: node id out of range");
  std::vector<std::size_t> init(g.num_nodes(), 0);
  init[v] = 1;
  return init;
}

inline WLFingerprint marked_certificate(const Graph& g, NodeId v) {
  return fingerprint(g, marked_init(g, v));
}

}  // namespace subsel
