// Acceptance run: one line per criterion, nonzero exit if any fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "subsel/bags.hpp"
#include "subsel/csl.hpp"
#include "subsel/dataset.hpp"
#include "subsel/experiment.hpp"
#include "subsel/gnn.hpp"
#include "subsel/policy_analysis.hpp"
#include "subsel/theory.hpp"
#include "subsel/wl.hpp"

using namespace subsel;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double budget_s,
               const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = elapsed <= budget_s;
  const bool pass = out.ok && in_time;
  if (!pass) ++failures;
  std::printf("[%s] %2d %-34s %8.2fs (budget %.0fs)  %s%s\n", pass ? "PASS" : "FAIL", id,
              name.c_str(), elapsed, budget_s, out.detail.c_str(),
              in_time ? "" : "  over time budget");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::vector<Graph> pair_family() {
  std::vector<Graph> out;
  for (const auto& combo : skip_combinations({2, 3, 5}, 2)) out.push_back(make_nl_csl(13, combo));
  return out;
}

Graph random_graph(Rng& rng) {
  const std::size_t n = 3 + rng.below(18);
  const double density = 0.1 + 0.5 * rng.uniform01();
  std::vector<Edge> edges;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (rng.bernoulli(density)) edges.emplace_back(u, v);
  return Graph(n, std::move(edges));
}

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t(r, c);
  for (auto& x : t.data()) x = 2.0 * rng.uniform01() - 1.0;
  return t;
}

Outcome c1_wl_indistinguishable() {
  const auto family = pair_family();
  const Graph triple = make_nl_csl(13, {2, 3, 5});
  Rng rng(1);
  std::vector<Graph> relabeled{triple};
  for (int k = 0; k < 10; ++k) relabeled.push_back(permute(triple, rng.permutation(39)));
  std::size_t pairs = 0;
  for (const std::vector<Graph>* set : std::array<const std::vector<Graph>*, 2>{&family, &relabeled}) {
    for (std::size_t i = 0; i < set->size(); ++i) {
      const Graph& g = (*set)[i];
      if (wl_refine(g).num_colors() != 1) return {false, "stable coloring not monochromatic"};
      for (NodeId v = 0; v < g.num_nodes(); ++v)
        if (degree(g, v) != 4) return {false, "graph is not 4-regular"};
      for (std::size_t j = i + 1; j < set->size(); ++j, ++pairs)
        if (wl_distinguish(g, (*set)[j])) return {false, "a pair is distinguished"};
    }
  }
  return {true, std::to_string(pairs) + " pairs indistinguishable"};
}

Outcome c2_single_subgraph() {
  const bool differ = marked_certificate(make_csl(13, 5), 0) != marked_certificate(make_csl(13, 3), 0);
  return {differ, differ ? "certificates differ" : "certificates equal"};
}

// Canonical members place component i at ids [13 i, 13 i + 13).
Outcome c3_identification_iff_coverage() {
  const auto family = pair_family();
  const FamilyIndex index(family);
  std::size_t checked = 0;
  std::size_t identified = 0;
  for (const Graph& member : family) {
    for (NodeId a = 0; a < 26; ++a) {
      for (NodeId b = 0; b < 26; ++b) {
        const bool covers = (a / 13) != (b / 13);
        const bool ident = index.identifies(SubgraphBag(member, {a, b}));
        if (ident != covers) return {false, "mismatch at (" + std::to_string(a) + "," + std::to_string(b) + ")"};
        identified += ident;
        ++checked;
      }
    }
  }
  return {true, std::to_string(checked) + " bags, " + std::to_string(identified) + " identifying"};
}

Outcome c4_random_success() {
  std::string detail;
  bool ok = true;
  for (std::size_t l : {2u, 3u, 5u}) {
    const auto stats = random_success_mc(13, l, 100000, 40 + l);
    const double p = random_success_exact(static_cast<int>(l));
    const double sigma = std::sqrt(p * (1 - p) / 1e5);
    const double z = (stats.success_prob - p) / sigma;
    ok = ok && std::fabs(z) <= 3.0;
    detail += "l=" + std::to_string(l) + " z=" + fmt("%+.2f", z) + " ";
  }
  return {ok, detail};
}

Outcome c5_coupon_collector() {
  std::string detail;
  bool ok = std::fabs(expected_draws_exact(2) - 3.0) < 1e-12 &&
            std::fabs(expected_draws_exact(3) - 5.5) < 1e-12 &&
            std::fabs(expected_draws_exact(10) - 7381.0 / 252.0) < 1e-12;
  for (std::size_t l : {2u, 3u, 10u}) {
    const auto stats = expected_draws_mc(13, l, 100000, 50 + l);
    const double z = (stats.expected_draws - expected_draws_exact(static_cast<int>(l))) / stats.std_err;
    ok = ok && std::fabs(z) <= 3.0;
    detail += "l=" + std::to_string(l) + " z=" + fmt("%+.2f", z) + " ";
  }
  return {ok, detail};
}

Outcome c6_degree_policy() {
  Rng rng(606);
  const int graphs = 40;
  for (int trial = 0; trial < graphs; ++trial) {
    const Graph g = random_graph(rng);
    const int d = 1 + static_cast<int>(rng.below(5));
    std::set<NodeId> selected;
    const std::size_t picks = rng.below(4);
    for (std::size_t k = 0; k < picks; ++k) selected.insert(rng.below(g.num_nodes()));
    const Tensor trace = verify_degree_policy(g, d, selected);
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      const double want = (static_cast<int>(degree(g, v)) > d && !selected.count(v)) ? 1.0 : 0.0;
      if (trace[v] != want) return {false, "trace differs, trial " + std::to_string(trial)};
    }
    DegreePolicyNet net = build_degree_policy_weights(d);
    if (degree_policy_forward(g, net, selected) != trace) {
      return {false, "generic forward differs, trial " + std::to_string(trial)};
    }
  }
  return {true, std::to_string(graphs) + " graphs bit-exact"};
}

Outcome c7_selector_separation() {
  const auto family2 = pair_family();
  const std::vector<Graph> family3{make_nl_csl(13, {2, 3, 5})};
  const std::size_t seeds = 1000;
  bool ok = true;
  std::string detail;
  auto run = [&](std::span<const Graph> family, std::size_t steps) {
    const FamilyIndex index(family);
    std::size_t oracle = 0;
    std::size_t random = 0;
    std::size_t total = 0;
    for (const Graph& g : family) {
      for (std::uint64_t s = 0; s < seeds; ++s, ++total) {
        oracle += index.identifies(wl_oracle_selector(g, steps, Rng::derive(700 + steps, s)));
        random += index.identifies(random_policy(g, steps, Rng::derive(800 + steps, s), true));
      }
    }
    const double p = random_success_exact(static_cast<int>(steps));
    const double rate = static_cast<double>(random) / static_cast<double>(total);
    const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(total));
    ok = ok && oracle == total && std::fabs(rate - p) <= 3 * sigma;
    detail += "T=" + std::to_string(steps) + " oracle " + std::to_string(oracle) + "/" +
              std::to_string(total) + " random " + fmt("%.3f", rate) + " ";
  };
  run(family2, 2);
  run(family3, 3);
  return {ok, detail};
}

Outcome c8_gradients() {
  Rng rng(88);
  const Graph graph = make_nl_csl(13, {2, 5});
  const Adjacency& adj = graph.adjacency();
  const Tensor x = random_tensor(graph.num_nodes(), 4, rng);

  GINLayerParams gin = make_gin("gin", 4, 5, rng);
  GraphConvParams conv{{"w1", random_tensor(4, 3, rng)},
                       {"w2", random_tensor(4, 3, rng)},
                       {"b", random_tensor(1, 3, rng)}};
  Mlp mlp = make_mlp("mlp", 4, 6, 2, rng);
  double unit = 0.0;
  {
    std::vector<Parameter*> ps;
    collect(gin.mlp, ps);
    unit = std::max(unit, finite_diff_check([&](Tape& t) {
      Context ctx(t);
      const Var h = gin_layer(ctx, ctx.constant(x), adj, gin);
      return sum_all(mul(h, h));
    }, ps, 1e-5));
  }
  {
    std::vector<Parameter*> ps{&conv.w_self, &conv.w_neigh, &conv.bias};
    unit = std::max(unit, finite_diff_check([&](Tape& t) {
      Context ctx(t);
      const Var h = graphconv_layer(ctx, ctx.constant(x), adj, conv);
      return sum_all(mul(h, h));
    }, ps, 1e-5));
  }
  {
    std::vector<Parameter*> ps;
    collect(mlp, ps);
    unit = std::max(unit, finite_diff_check([&](Tape& t) {
      Context ctx(t);
      return cross_entropy(mean(apply(ctx, mlp, ctx.constant(x)), 0), 1);
    }, ps, 1e-5));
  }

  Rng init(3);
  SelectionNetParams f = make_selection_net({3, 8}, 1, init);
  PredictionNetParams g = make_prediction_net({3, 8}, 1, 3, init);
  std::vector<StepRecord> frozen;
  {
    Tape tape;
    Context ctx(tape);
    Rng noise(5);
    frozen = run_pipeline(ctx, graph, f, g, 2, Mode::Train, noise).steps;
  }
  auto loss_fn = [&](Tape& tape) {
    Context ctx(tape);
    Rng unused(0);
    return cross_entropy(run_pipeline(ctx, graph, f, g, 2, Mode::Train, unused, &frozen).output, 1);
  };
  auto params = f.parameters();
  for (auto* p : g.parameters()) params.push_back(p);
  const double pipeline = finite_diff_check(loss_fn, params, 1e-4);
  return {unit < 1e-5 && pipeline < 1e-3,
          "units " + fmt("%.2e", unit) + ", T=2 pipeline " + fmt("%.2e", pipeline)};
}

Outcome c9_gumbel_law() {
  const Tensor logits = Tensor::column({0.5, -1.0, 2.0, 0.0, 1.2});
  const std::size_t draws = 100000;
  double softmax_sum = 0.0;
  for (double v : logits.data()) softmax_sum += std::exp(v);
  double worst_z = 0.0;
  for (double tau : {0.33, 1.0, 2.0}) {
    Rng rng(Rng::derive(9, static_cast<std::uint64_t>(tau * 100)));
    std::vector<double> counts(logits.size(), 0.0);
    for (std::size_t k = 0; k < draws; ++k) {
      Tape tape;
      counts[gumbel_softmax_st(tape.constant(logits), tau, rng).choice] += 1.0;
    }
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double p = std::exp(logits[i]) / softmax_sum;
      const double sigma = std::sqrt(draws * p * (1 - p));
      worst_z = std::max(worst_z, std::fabs(counts[i] - draws * p) / sigma);
    }
  }
  return {worst_z <= 4.0, "max |z| " + fmt("%.2f", worst_z)};
}

// Policy-learn on the pair family against a random T=2 baseline.
Outcome c10_learning_separation() {
  ExperimentConfig cfg;
  cfg.T = 2;
  cfg.tau = 1.0;
  cfg.lr = 1e-3;
  cfg.epochs = 500;
  cfg.batch_size = 1;
  cfg.copies = 10;
  int successes = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg.seed = seed;
    const Dataset ds = make_family_dataset(cfg.n, cfg.skips, cfg.l, cfg.copies, seed);
    const RunReport r = run_policy_learn(cfg, ds);
    const bool ok = r.coverage >= 0.9 && r.final_metric >= 0.9;
    successes += ok;
    detail += "s" + std::to_string(seed) + "(acc " + fmt("%.2f", r.final_metric) + " cov " +
              fmt("%.2f", r.coverage) + ") ";
  }

  cfg.seed = 0;
  cfg.baseline = Baseline::Random;
  const Dataset ds = make_family_dataset(cfg.n, cfg.skips, cfg.l, cfg.copies, 0);
  Model model;
  run_baseline(cfg, ds, &model);
  // Coverage of random bags over the whole dataset under many eval streams.
  double coverage = 0.0;
  const std::size_t streams = 20;
  for (std::uint64_t s = 0; s < streams; ++s) coverage += evaluate(cfg, model, ds, 1000 + s).coverage;
  coverage /= static_cast<double>(streams);
  const double bags = static_cast<double>(streams * ds.size());
  const double sigma = std::sqrt(0.25 / bags);
  const bool random_ok = std::fabs(coverage - 0.5) <= 3 * sigma;
  detail += "| " + std::to_string(successes) + "/5 seeds; random cov " + fmt("%.3f", coverage);
  return {successes >= 3 && random_ok, detail};
}

Outcome c11_message_counters() {
  const Graph graph = make_nl_csl(13, {2, 5});
  Rng init(11);
  SelectionNetParams f = make_selection_net({3, 8}, 1, init);
  PredictionNetParams g = make_prediction_net({3, 8}, 1, 3, init);
  const std::size_t n_dmax = graph.num_nodes() * max_degree(graph);
  const std::size_t c = 2 * f.depth();
  std::string detail;
  for (std::size_t T : {1u, 2u, 4u, 8u}) {
    Tape tape;
    Context ctx(tape);
    Rng rng(T);
    const auto res = run_pipeline(ctx, graph, f, g, T, Mode::Train, rng);
    const std::size_t want = c * T * (T + 1) / 2 * n_dmax;
    if (res.selection_messages != want) {
      return {false, "T=" + std::to_string(T) + ": " + std::to_string(res.selection_messages) +
                         " != " + std::to_string(want)};
    }
    detail += "T=" + std::to_string(T) + ":" + std::to_string(want) + " ";
  }
  return {true, detail + "(c=" + std::to_string(c) + ")"};
}

}  // namespace

int main() {
  criterion(1, "wl-indistinguishability", 1, c1_wl_indistinguishable);
  criterion(2, "single-subgraph disambiguation", 1, c2_single_subgraph);
  criterion(3, "identification iff coverage", 30, c3_identification_iff_coverage);
  criterion(4, "random policy success rate", 10, c4_random_success);
  criterion(5, "coupon-collector draws", 10, c5_coupon_collector);
  criterion(6, "explicit degree-policy weights", 5, c6_degree_policy);
  criterion(7, "oracle vs random selection", 30, c7_selector_separation);
  criterion(8, "gradient integrity", 60, c8_gradients);
  criterion(9, "straight-through gumbel law", 10, c9_gumbel_law);
  criterion(10, "end-to-end learning separation", 900, c10_learning_separation);
  criterion(11, "selection message counters", 5, c11_message_counters);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
