#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "subsel/csl.hpp"
#include "subsel/graph.hpp"
#include "subsel/rng.hpp"

namespace subsel {

struct LabeledGraph {
  Graph graph;
  double label = 0.0;  // class index for classification
};

struct Dataset {
  std::vector<LabeledGraph> items;
  std::size_t num_classes = 0;
  std::vector<Graph> members;  // one representative per class, when known

  std::size_t size() const { return items.size(); }
};

// Size-l subsets of `skips` in lexicographic order of positions.
inline std::vector<std::vector<std::size_t>> skip_combinations(const std::vector<std::size_t>& skips,
                                                               std::size_t l) {
  if (l == 0 || l > skips.size()) {
    throw std::invalid_argument("skip_combinations: need 1 <= l <= |skips|");
  }
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> pick(l);
  for (std::size_t i = 0; i < l; ++i) pick[i] = i;
  for (;;) {
    std::vector<std::size_t> combo;
    for (auto i : pick) combo.push_back(skips[i]);
    out.push_back(std::move(combo));
    std::size_t i = l;
    while (i > 0 && pick[i - 1] == skips.size() - l + (i - 1)) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (std::size_t j = i; j < l; ++j) pick[j] = pick[j - 1] + 1;
  }
  return out;
}

// One class per size-l subset of skips; `copies` randomly relabeled
// instances of each (n, l)-CSL graph.
inline Dataset make_family_dataset(std::size_t n, const std::vector<std::size_t>& skips,
                                   std::size_t l, std::size_t copies, std::uint64_t seed) {
  if (copies == 0) throw std::invalid_argument("make_family_dataset: copies must be >= 1");
  // Validates the whole skip list (pairwise non-isomorphic components).
  (void)make_nl_csl(n, skips);
  Dataset ds;
  Rng rng(seed);
  for (const auto& combo : skip_combinations(skips, l)) {
    ds.members.push_back(make_nl_csl(n, combo));
  }
  ds.num_classes = ds.members.size();
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    const Graph& base = ds.members[c];
    for (std::size_t k = 0; k < copies; ++k) {
      const auto perm = rng.permutation(base.num_nodes());
      ds.items.push_back({permute(base, perm), static_cast<double>(c)});
    }
  }
  return ds;
}

struct Split {
  Dataset train;
  Dataset test;
};

// Per-class shuffle and split; each class contributes round(fraction * size)
// items to train (at least one to each side when it has two or more).
inline Split split_dataset(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split_dataset: fraction must be in (0, 1)");
  }
  std::map<long long, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    by_label[static_cast<long long>(ds.items[i].label)].push_back(i);
  }
  Rng rng(seed);
  Split out;
  out.train.num_classes = out.test.num_classes = ds.num_classes;
  out.train.members = out.test.members = ds.members;
  for (auto& [label, idx] : by_label) {
    rng.shuffle(idx);
    auto n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(idx.size()) + 0.5);
    if (idx.size() >= 2) n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      (k < n_train ? out.train : out.test).items.push_back(ds.items[idx[k]]);
    }
  }
  return out;
}

}  // namespace subsel
