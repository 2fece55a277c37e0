#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "subsel/bags.hpp"
#include "subsel/csl.hpp"
#include "subsel/dataset.hpp"
#include "subsel/rng.hpp"
#include "subsel/theory.hpp"

using namespace subsel;

namespace {

Tensor expected_scores(const Graph& g, int d, const std::set<NodeId>& selected) {
  Tensor out(g.num_nodes(), 1);
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    out[v] = (static_cast<int>(degree(g, v)) > d && !selected.count(v)) ? 1.0 : 0.0;
  }
  return out;
}

Graph random_graph(Rng& rng) {
  const std::size_t n = 3 + rng.below(18);
  const double density = 0.1 + 0.5 * rng.uniform01();
  std::vector<Edge> edges;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (rng.bernoulli(density)) edges.emplace_back(u, v);
  return Graph(n, edges);
}

}  // namespace

TEST(DegreePolicyWeights, MatchConstruction) {
  DegreePolicyNet net = build_degree_policy_weights(3);
  EXPECT_EQ(net.layers[0].bias.value, Tensor::from_rows({{-3, 0}}));
  // Stored in x out: W1 = [[0,0],[0,1]] is symmetric, W2 = [[1,0],[0,0]] likewise.
  EXPECT_EQ(net.layers[0].w_self.value, Tensor::from_rows({{0, 0}, {0, 1}}));
  EXPECT_EQ(net.layers[0].w_neigh.value, Tensor::from_rows({{1, 0}, {0, 0}}));
  for (int l : {1, 2}) {
    EXPECT_EQ(net.layers[l].w_self.value, Tensor::from_rows({{-1, 0}, {0, 1}}));
    EXPECT_EQ(net.layers[l].w_neigh.value, Tensor(2, 2));
    EXPECT_EQ(net.layers[l].bias.value, Tensor::from_rows({{1, 0}}));
  }
  EXPECT_EQ(net.layers[3].w_self.value, Tensor::from_rows({{1}, {-1}}));
  EXPECT_EQ(net.layers[3].w_neigh.value, Tensor(2, 1));
  EXPECT_EQ(net.layers[3].bias.value, Tensor(1, 1));
  EXPECT_EQ(net.pool, Pool::Min);
  for (int d : {1, 7}) {
    DegreePolicyNet other = build_degree_policy_weights(d);
    EXPECT_EQ(other.layers[3].w_self.value, Tensor::from_rows({{1}, {-1}}));
    EXPECT_EQ(other.layers[0].bias.value(0, 0), -d);
  }
  EXPECT_THROW(build_degree_policy_weights(0), std::invalid_argument);
}

TEST(DegreePolicyWeights, FirstLayerOnCsl) {
  const Graph g = make_csl(13, 5);
  DegreePolicyNet net = build_degree_policy_weights(3);
  Tape tape;
  Context ctx(tape);
  Tensor h(13, 2);
  for (NodeId v = 0; v < 13; ++v) h(v, 0) = 1.0;
  h(4, 1) = 1.0;
  const Tensor out =
      graphconv_layer(ctx, ctx.constant(h), g.adjacency(), net.layers[0]).value();
  for (NodeId v = 0; v < 13; ++v) {
    EXPECT_EQ(out(v, 0), 1.0);  // deg 4 - 3
    EXPECT_EQ(out(v, 1), v == 4 ? 1.0 : 0.0);
  }
}

TEST(VerifyDegreePolicy, Examples) {
  const Graph csl = make_csl(13, 5);
  EXPECT_EQ(verify_degree_policy(csl, 3, {}), Tensor(13, 1, 1.0));
  EXPECT_EQ(verify_degree_policy(csl, 4, {}), Tensor(13, 1, 0.0));
  EXPECT_EQ(verify_degree_policy(star_graph(5), 2, {0}), Tensor(6, 1, 0.0));
  Tensor star_no_sel(6, 1, 0.0);
  star_no_sel[0] = 1.0;
  EXPECT_EQ(verify_degree_policy(star_graph(5), 2, {}), star_no_sel);
  const Tensor some = verify_degree_policy(csl, 3, {2, 9});
  for (NodeId v = 0; v < 13; ++v) EXPECT_EQ(some[v], (v == 2 || v == 9) ? 0.0 : 1.0);
  EXPECT_THROW(verify_degree_policy(csl, 3, {13}), std::out_of_range);
}

TEST(VerifyDegreePolicy, RandomGraphsExactAndCrossChecked) {
  Rng rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const Graph g = random_graph(rng);
    const int d = 1 + static_cast<int>(rng.below(5));
    std::set<NodeId> selected;
    const std::size_t picks = rng.below(4);
    for (std::size_t k = 0; k < picks; ++k) selected.insert(rng.below(g.num_nodes()));
    const Tensor trace = verify_degree_policy(g, d, selected);
    for (double x : trace.data()) EXPECT_TRUE(x == 0.0 || x == 1.0);
    EXPECT_EQ(trace, expected_scores(g, d, selected));
    DegreePolicyNet net = build_degree_policy_weights(d);
    EXPECT_EQ(degree_policy_forward(g, net, selected), trace);
  }
}

TEST(OracleSelector, CoversEveryComponent) {
  const Graph g2 = make_nl_csl(13, {3, 5});
  const auto parts2 = connected_components(g2);
  const Graph g3 = make_nl_csl(13, {2, 3, 5});
  const auto parts3 = connected_components(g3);
  const std::vector<Graph> family3{g3};
  const FamilyIndex index3(family3);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    EXPECT_TRUE(covers_all_components(wl_oracle_selector(g2, 2, seed), parts2));
    const SubgraphBag bag = wl_oracle_selector(g3, 3, seed);
    EXPECT_TRUE(covers_all_components(bag, parts3));
    EXPECT_TRUE(index3.identifies(bag));
  }
  EXPECT_THROW(wl_oracle_selector(g2, 3, 0), std::invalid_argument);
}

TEST(OracleSelector, FirstDrawIsUniform) {
  const Graph g = make_nl_csl(13, {3, 5});
  std::vector<double> counts(26, 0.0);
  const std::size_t draws = 26000;
  for (std::uint64_t s = 0; s < draws; ++s) counts[wl_oracle_selector(g, 1, s).roots[0]] += 1.0;
  const double p = 1.0 / 26;
  const double sigma = std::sqrt(draws * p * (1 - p));
  for (double c : counts) EXPECT_NEAR(c, draws * p, 4 * sigma);
}

TEST(OracleSelector, SecondDrawUniformOverOtherComponent) {
  const Graph g = make_nl_csl(13, {2, 5});
  std::vector<double> counts(26, 0.0);
  const std::size_t runs = 13000;
  for (std::uint64_t s = 0; s < runs; ++s) {
    const auto roots = wl_oracle_selector(g, 2, s).roots;
    if (roots[0] < 13) counts[roots[1]] += 1.0;
  }
  double total = 0.0;
  for (NodeId v = 0; v < 13; ++v) EXPECT_EQ(counts[v], 0.0);
  for (NodeId v = 13; v < 26; ++v) total += counts[v];
  const double p = 1.0 / 13;
  const double sigma = std::sqrt(total * p * (1 - p));
  for (NodeId v = 13; v < 26; ++v) EXPECT_NEAR(counts[v], total * p, 4 * sigma);
}

TEST(OracleSelector, IdentifiesAllMembersOfPairFamily) {
  std::vector<Graph> family;
  for (const auto& combo : skip_combinations({2, 3, 5}, 2)) family.push_back(make_nl_csl(13, combo));
  const FamilyIndex index(family);
  for (const Graph& member : family) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      EXPECT_TRUE(index.identifies(wl_oracle_selector(member, 2, seed)));
    }
  }
}
