#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "subsel/bags.hpp"
#include "subsel/csl.hpp"
#include "subsel/dataset.hpp"
#include "subsel/policy_analysis.hpp"
#include "subsel/rng.hpp"
#include "subsel/theory.hpp"
#include "subsel/wl.hpp"

namespace subsel {

struct VerifyOptions {
  std::uint64_t seed = 0;
  std::size_t seeds = 1000;     // selector runs per graph
  std::size_t trials = 100000;  // Monte-Carlo trials
  std::size_t random_graphs = 20;
};

struct SuiteResult {
  std::string name;
  std::size_t checks = 0;
  std::size_t failures = 0;
  std::vector<std::string> notes;  // first few failure descriptions
  double seconds = 0.0;

  bool passed() const { return failures == 0 && checks > 0; }

  void check(bool ok, const std::string& what) {
    ++checks;
    if (ok) return;
    ++failures;
    if (notes.size() < 5) notes.push_back(what);
  }
};

namespace detail {

inline std::vector<Graph> pair_family() {
  std::vector<Graph> out;
  for (const auto& combo : skip_combinations({2, 3, 5}, 2)) out.push_back(make_nl_csl(13, combo));
  return out;
}

inline Graph random_simple_graph(Rng& rng) {
  const std::size_t n = 3 + rng.below(18);
  const double density = 0.1 + 0.5 * rng.uniform01();
  std::vector<Edge> edges;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (rng.bernoulli(density)) edges.emplace_back(u, v);
  return Graph(n, std::move(edges));
}

inline SuiteResult timed(const std::string& name, const std::function<void(SuiteResult&)>& body) {
  SuiteResult r;
  r.name = name;
  const auto start = std::chrono::steady_clock::now();
  body(r);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace detail

// Family members and relabelings are pairwise WL-equivalent with one stable color.
inline SuiteResult verify_wl_indistinguishability(const VerifyOptions& opt) {
  return detail::timed("wl-indistinguishable", [&](SuiteResult& r) {
    auto graphs = detail::pair_family();
    const Graph triple = make_nl_csl(13, {2, 3, 5});
    Rng rng(opt.seed);
    std::vector<Graph> relabeled{triple};
    for (int k = 0; k < 5; ++k) relabeled.push_back(permute(triple, rng.permutation(39)));
    for (auto* set : {&graphs, &relabeled}) {
      for (std::size_t i = 0; i < set->size(); ++i) {
        r.check(wl_refine((*set)[i]).num_colors() == 1, "stable coloring not monochromatic");
        for (std::size_t j = i + 1; j < set->size(); ++j) {
          r.check(!wl_distinguish((*set)[i], (*set)[j]), "pair distinguished by 1-WL");
        }
      }
    }
  });
}

inline SuiteResult verify_single_subgraph(const VerifyOptions&) {
  return detail::timed("single-subgraph", [](SuiteResult& r) {
    r.check(marked_certificate(make_csl(13, 5), 0) != marked_certificate(make_csl(13, 3), 0),
            "CSL(13,5) and CSL(13,3) share a marked certificate");
    r.check(marked_certificate(make_csl(13, 2), 0) != marked_certificate(make_csl(13, 5), 0),
            "CSL(13,2) and CSL(13,5) share a marked certificate");
  });
}

// identifies(bag) <=> covers_all_components(bag) over every ordered root pair.
inline SuiteResult verify_identification_coverage(const VerifyOptions&) {
  return detail::timed("identification-iff-coverage", [](SuiteResult& r) {
    const auto family = detail::pair_family();
    const FamilyIndex index(family);
    for (const Graph& member : family) {
      const auto parts = connected_components(member);
      for (NodeId a = 0; a < member.num_nodes(); ++a) {
        for (NodeId b = 0; b < member.num_nodes(); ++b) {
          const SubgraphBag bag(member, {a, b});
          r.check(index.identifies(bag) == covers_all_components(bag, parts),
                  "pair (" + std::to_string(a) + "," + std::to_string(b) + ")");
        }
      }
    }
  });
}

inline SuiteResult verify_random_success(const VerifyOptions& opt) {
  return detail::timed("random-success", [&](SuiteResult& r) {
    for (std::size_t l : {2u, 3u, 5u}) {
      const auto stats = random_success_mc(13, l, opt.trials, Rng::derive(opt.seed, l));
      const double p = random_success_exact(static_cast<int>(l));
      const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(opt.trials));
      r.check(std::fabs(stats.success_prob - p) <= 3 * sigma, "l=" + std::to_string(l));
    }
  });
}

inline SuiteResult verify_coupon_collector(const VerifyOptions& opt) {
  return detail::timed("coupon-collector", [&](SuiteResult& r) {
    for (std::size_t l : {2u, 3u, 10u}) {
      const auto stats = expected_draws_mc(13, l, opt.trials, Rng::derive(opt.seed, 100 + l));
      const double exact = expected_draws_exact(static_cast<int>(l));
      r.check(std::fabs(stats.expected_draws - exact) <= 3 * stats.std_err,
              "l=" + std::to_string(l));
    }
  });
}

// Loop-level trace against the closed-form scores and the generic forward.
inline SuiteResult verify_degree_policy_weights(const VerifyOptions& opt) {
  return detail::timed("degree-policy", [&](SuiteResult& r) {
    Rng rng(Rng::derive(opt.seed, 7));
    for (std::size_t trial = 0; trial < opt.random_graphs; ++trial) {
      const Graph g = detail::random_simple_graph(rng);
      const int d = 1 + static_cast<int>(rng.below(5));
      std::set<NodeId> selected;
      const std::size_t picks = rng.below(4);
      for (std::size_t k = 0; k < picks; ++k) selected.insert(rng.below(g.num_nodes()));
      const Tensor trace = verify_degree_policy(g, d, selected);
      bool exact = true;
      for (NodeId v = 0; v < g.num_nodes(); ++v) {
        const double want = degree(g, v) > static_cast<std::size_t>(d) && !selected.count(v);
        exact = exact && trace[v] == want;
      }
      r.check(exact, "trace differs from closed form, trial " + std::to_string(trial));
      DegreePolicyNet net = build_degree_policy_weights(d);
      r.check(degree_policy_forward(g, net, selected) == trace,
              "generic forward differs, trial " + std::to_string(trial));
    }
  });
}

struct SelectorRates {
  double oracle = 0.0;
  double random = 0.0;
};

// Identification rates of the oracle selector and of random selection with
// replacement on one (n, l)-CSL graph.
inline SelectorRates selector_rates(const Graph& g, std::span<const Graph> family,
                                    std::size_t steps, std::size_t seeds, std::uint64_t base) {
  const FamilyIndex index(family);
  std::size_t oracle_hits = 0;
  std::size_t random_hits = 0;
  for (std::size_t s = 0; s < seeds; ++s) {
    if (index.identifies(wl_oracle_selector(g, steps, Rng::derive(base, 2 * s)))) ++oracle_hits;
    if (index.identifies(random_policy(g, steps, Rng::derive(base, 2 * s + 1), true))) ++random_hits;
  }
  const double count = static_cast<double>(seeds);
  return {oracle_hits / count, random_hits / count};
}

inline SuiteResult verify_oracle_selector(const VerifyOptions& opt) {
  return detail::timed("oracle-selector", [&](SuiteResult& r) {
    const auto family2 = detail::pair_family();
    const std::vector<Graph> family3{make_nl_csl(13, {2, 3, 5})};
    struct Case {
      const Graph* g;
      std::span<const Graph> family;
      std::size_t steps;
    };
    const std::vector<Case> cases{{&family2[0], family2, 2}, {&family3[0], family3, 3}};
    for (const auto& c : cases) {
      const auto rates = selector_rates(*c.g, c.family, c.steps, opt.seeds, opt.seed + c.steps);
      const double p = random_success_exact(static_cast<int>(c.steps));
      const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(opt.seeds));
      r.check(rates.oracle == 1.0, "oracle rate " + std::to_string(rates.oracle));
      r.check(std::fabs(rates.random - p) <= 3 * sigma, "random rate " + std::to_string(rates.random));
    }
  });
}

inline std::vector<SuiteResult> run_all_suites(const VerifyOptions& opt) {
  return {verify_wl_indistinguishability(opt), verify_single_subgraph(opt),
          verify_identification_coverage(opt), verify_random_success(opt),
          verify_coupon_collector(opt),        verify_degree_policy_weights(opt),
          verify_oracle_selector(opt)};
}

}  // namespace subsel
