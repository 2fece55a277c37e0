#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "subsel/bags.hpp"
#include "subsel/csl.hpp"
#include "subsel/gnn.hpp"
#include "subsel/rng.hpp"

using namespace subsel;

namespace {

Mlp identity_mlp(std::size_t width) {
  Mlp m;
  m.first = Linear{{"a.w", Tensor::identity(width)}, {"a.b", Tensor(1, width)}};
  m.second = Linear{{"b.w", Tensor::identity(width)}, {"b.b", Tensor(1, width)}};
  return m;
}

Tensor run_gin(const Graph& g, const Tensor& h, GINLayerParams& params) {
  Tape tape;
  Context ctx(tape);
  return gin_layer(ctx, ctx.constant(h), g.adjacency(), params).value();
}

Tensor run_graphconv(const Graph& g, const Tensor& h, GraphConvParams& params) {
  Tape tape;
  Context ctx(tape);
  return graphconv_layer(ctx, ctx.constant(h), g.adjacency(), params).value();
}

Tensor permute_rows(const Tensor& t, const std::vector<NodeId>& perm) {
  Tensor out(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) out(perm[r], c) = t(r, c);
  return out;
}

std::vector<NodeId> permute_roots(const std::vector<NodeId>& roots, const std::vector<NodeId>& perm) {
  std::vector<NodeId> out;
  for (NodeId v : roots) out.push_back(perm[v]);
  return out;
}

}  // namespace

TEST(Gin, RegularGraphIdentityMlp) {
  GINLayerParams params{0.0, identity_mlp(1)};
  const Graph g = make_csl(13, 5);
  const Tensor out = run_gin(g, Tensor(13, 1, 1.0), params);
  for (std::size_t i = 0; i < 13; ++i) EXPECT_EQ(out[i], 5.0);
}

TEST(Gin, EdgelessIsIdentity) {
  GINLayerParams params{0.0, identity_mlp(2)};
  const Graph g(3, {});
  const Tensor h = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}});
  EXPECT_EQ(run_gin(g, h, params), h);
}

TEST(Gin, EpsilonScalesSelf) {
  GINLayerParams params{0.5, identity_mlp(1)};
  const Graph g = path_graph(3);
  const Tensor out = run_gin(g, Tensor::column({1, 2, 4}), params);
  EXPECT_EQ(out, Tensor::column({1.5 + 2, 3 + 5, 6 + 2}));
}

TEST(Gin, RejectsChannelMismatch) {
  GINLayerParams params{0.0, identity_mlp(2)};
  EXPECT_THROW(run_gin(path_graph(3), Tensor(3, 1), params), std::invalid_argument);
}

TEST(Gin, PermutationEquivariant) {
  Rng rng(3);
  const Graph g = make_nl_csl(13, {2, 5});
  GINLayerParams params = make_gin("x", 3, 4, rng);
  Tensor h(26, 3);
  for (auto& v : h.data()) v = rng.uniform01();
  const Tensor base = run_gin(g, h, params);
  for (int trial = 0; trial < 5; ++trial) {
    const auto perm = rng.permutation(26);
    const Tensor out = run_gin(permute(g, perm), permute_rows(h, perm), params);
    EXPECT_EQ(out, permute_rows(base, perm));
  }
}

TEST(GraphConv, Examples) {
  const Graph g = make_csl(13, 3);
  GraphConvParams zero{{"w1", Tensor(2, 2)}, {"w2", Tensor(2, 2)}, {"b", Tensor(1, 2)}};
  EXPECT_EQ(run_graphconv(g, Tensor(13, 2, 3.0), zero), Tensor(13, 2));
  GraphConvParams ident{{"w1", Tensor::identity(2)}, {"w2", Tensor(2, 2)}, {"b", Tensor(1, 2)}};
  Tensor h(13, 2);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = static_cast<double>(i % 5);
  EXPECT_EQ(run_graphconv(g, h, ident), h);
  GraphConvParams bad{{"w1", Tensor(3, 2)}, {"w2", Tensor(2, 2)}, {"b", Tensor(1, 2)}};
  EXPECT_THROW(run_graphconv(g, h, bad), std::invalid_argument);
}

class SelectionNetTest : public ::testing::Test {
 protected:
  Rng rng{11};
  NetworkPlan plan{3, 8};
  SelectionNetParams f = make_selection_net(plan, 1, rng);
  PredictionNetParams g = make_prediction_net(plan, 1, 3, rng);
};

TEST_F(SelectionNetTest, ParameterNamesAreUnique) {
  std::set<std::string> names;
  for (Parameter* p : f.parameters()) EXPECT_TRUE(names.insert(p->name).second) << p->name;
  for (Parameter* p : g.parameters()) EXPECT_TRUE(names.insert(p->name).second) << p->name;
  EXPECT_TRUE(names.count("f.fp.0.mlp.lin0.weight"));
  EXPECT_TRUE(names.count("g.readout.lin1.bias"));
}

TEST_F(SelectionNetTest, OriginalGraphGivesUniformRows) {
  const Graph graph = make_nl_csl(13, {3, 5});
  Tape tape;
  Context ctx(tape);
  const auto markings = bag_markings(ctx, SubgraphBag(graph, {}));
  const auto out = ds_forward(ctx, graph, markings, f.fp_layers, f.fh_layers);
  ASSERT_EQ(out.size(), 1u);
  const Tensor& h = out[0].value();
  for (std::size_t r = 1; r < h.rows(); ++r)
    for (std::size_t c = 0; c < h.cols(); ++c) EXPECT_EQ(h(r, c), h(0, c));
  const Tensor logits = selection_logits(SubgraphBag(graph, {}), f);
  for (std::size_t i = 1; i < logits.size(); ++i) EXPECT_EQ(logits[i], logits[0]);
}

TEST_F(SelectionNetTest, MarkingBreaksSymmetry) {
  const Graph graph = make_csl(13, 5);
  Tape tape;
  Context ctx(tape);
  const auto out = ds_forward(ctx, graph, bag_markings(ctx, SubgraphBag(graph, {0})), f.fp_layers,
                              f.fh_layers);
  const Tensor& h = out[1].value();
  bool differs = false;
  for (std::size_t r = 1; r < h.rows(); ++r)
    for (std::size_t c = 0; c < h.cols(); ++c) differs = differs || h(r, c) != h(0, c);
  EXPECT_TRUE(differs);
}

TEST_F(SelectionNetTest, SubgraphsProcessedIndependently) {
  const Graph graph = make_csl(13, 5);
  Tape tape;
  Context ctx(tape);
  const auto a = ds_forward(ctx, graph, bag_markings(ctx, SubgraphBag(graph, {2, 9})), f.fp_layers,
                            f.fh_layers);
  const auto b = ds_forward(ctx, graph, bag_markings(ctx, SubgraphBag(graph, {9, 2})), f.fp_layers,
                            f.fh_layers);
  EXPECT_EQ(a[1].value(), b[2].value());
  EXPECT_EQ(a[2].value(), b[1].value());
  EXPECT_EQ(a[0].value(), b[0].value());
}

TEST_F(SelectionNetTest, LogitsPermutationEquivariant) {
  const Graph graph = make_nl_csl(13, {2, 3});
  const std::vector<NodeId> roots{4, 17, 4};
  const Tensor base = selection_logits(SubgraphBag(graph, roots), f);
  for (int trial = 0; trial < 5; ++trial) {
    const auto perm = rng.permutation(26);
    const Graph pg = permute(graph, perm);
    const Tensor out = selection_logits(SubgraphBag(pg, permute_roots(roots, perm)), f);
    EXPECT_EQ(out, permute_rows(base, perm));
  }
}

TEST_F(SelectionNetTest, PredictionInvariances) {
  const Graph graph = make_csl(13, 3);
  const SubgraphBag bag(graph, {1, 5, 8});
  EXPECT_EQ(predict(bag, g), predict(bag, g));
  EXPECT_EQ(predict(bag, g), predict(SubgraphBag(graph, {8, 1, 5}), g));
  const Tensor a = predict(SubgraphBag(graph, {0}), g);
  const Tensor b = predict(SubgraphBag(graph, {7}), g);
  ASSERT_EQ(a.shape(), (std::vector<std::size_t>{1, 3}));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-10);
  const auto perm = rng.permutation(13);
  EXPECT_EQ(predict(SubgraphBag(permute(graph, perm), {perm[1], perm[5], perm[8]}), g),
            predict(bag, g));
}

TEST(Gumbel, UniformLogitsGiveUniformChoices) {
  const std::size_t n = 5;
  const std::size_t draws = 100000;
  Rng rng(1);
  std::vector<double> counts(n, 0.0);
  for (std::size_t k = 0; k < draws; ++k) {
    Tape tape;
    counts[gumbel_softmax_st(tape.constant(Tensor(n, 1, 0.3)), 1.0, rng).choice] += 1.0;
  }
  const double p = 1.0 / n;
  const double sigma = std::sqrt(draws * p * (1 - p));
  for (double c : counts) EXPECT_NEAR(c, draws * p, 4 * sigma);
}

TEST(Gumbel, FrequenciesFollowSoftmaxForAnyTau) {
  const Tensor logits = Tensor::column({std::log(1.0), std::log(2.0), std::log(3.0)});
  const std::vector<double> expected{1.0 / 6, 2.0 / 6, 3.0 / 6};
  const std::size_t draws = 100000;
  for (double tau : {0.33, 1.0, 2.0}) {
    Rng rng(static_cast<std::uint64_t>(tau * 100));
    std::vector<double> counts(3, 0.0);
    for (std::size_t k = 0; k < draws; ++k) {
      Tape tape;
      counts[gumbel_softmax_st(tape.constant(logits), tau, rng).choice] += 1.0;
    }
    for (std::size_t i = 0; i < 3; ++i) {
      const double sigma = std::sqrt(draws * expected[i] * (1 - expected[i]));
      EXPECT_NEAR(counts[i], draws * expected[i], 4 * sigma) << tau << " " << i;
    }
  }
}

TEST(Gumbel, MaskLeavesSingleNode) {
  Rng rng(2);
  std::vector<bool> mask(6, true);
  mask[3] = false;
  for (int k = 0; k < 200; ++k) {
    Tape tape;
    const auto s = gumbel_softmax_st(tape.constant(Tensor(6, 1, 0.0)), 1.0, rng, mask);
    EXPECT_EQ(s.choice, 3u);
    EXPECT_EQ(s.one_hot.value(), one_hot(6, 3));
  }
}

TEST(Gumbel, Errors) {
  Rng rng(0);
  Tape tape;
  const Var logits = tape.constant(Tensor(3, 1));
  EXPECT_THROW(gumbel_softmax_st(logits, 1.0, rng, std::vector<bool>(3, true)),
               std::invalid_argument);
  EXPECT_THROW(gumbel_softmax_st(logits, 0.0, rng), std::invalid_argument);
  EXPECT_THROW(gumbel_softmax_st(logits, 1.0, rng, std::vector<bool>(2, false)),
               std::invalid_argument);
}

TEST(Gumbel, BackwardMatchesSoftmaxJacobian) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + rng.below(5);
    Parameter logits{"l", Tensor(n, 1)};
    for (auto& v : logits.value.data()) v = 2 * rng.uniform01() - 1;
    const Tensor noise = draw_gumbel(n, rng);
    const Tensor upstream = [&] {
      Tensor t(n, 1);
      for (auto& v : t.data()) v = 2 * rng.uniform01() - 1;
      return t;
    }();
    const double tau = 0.5 + rng.uniform01();
    Tape tape;
    const auto s = gumbel_softmax_st(tape.param(logits), tau, noise, {});
    EXPECT_EQ(s.one_hot.value(), one_hot(n, s.choice));
    const Tensor grad =
        tape.backward(sum_all(mul(s.one_hot, tape.constant(upstream)))).get(logits);
    const Tensor& y = s.soft;
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += upstream[j] * y[j];
    for (std::size_t i = 0; i < n; ++i) {
      // d y_j / d l_i = y_j (delta_ij - y_i) / tau
      EXPECT_NEAR(grad[i], y[i] * (upstream[i] - dot) / tau, 1e-6);
    }
  }
}

TEST(Dropout, NeverDropsEveryNode) {
  Rng rng(4);
  for (int k = 0; k < 500; ++k) {
    const auto mask = dropout_mask(3, 0.9, rng);
    EXPECT_NE(std::count(mask.begin(), mask.end(), false), 0);
  }
  std::vector<bool> base{true, false, true};
  const auto kept = dropout_mask(3, 0.99, rng, base);
  EXPECT_EQ(kept, base);
  EXPECT_EQ(dropout_mask(4, 0.0, rng), std::vector<bool>(4, false));
}

TEST_F(SelectionNetTest, EvalSelectsArgmax) {
  const Graph graph = make_csl(13, 5);
  // All logits tie on the original graph alone: lowest id.
  EXPECT_EQ(select_step(SubgraphBag(graph, {}), f, Mode::Eval, 0), 0u);
  EXPECT_EQ(argmax_index(Tensor::column({0.1, 0.9, 0.3})), 1u);
  EXPECT_EQ(argmax_index(Tensor::column({0.5, 0.5})), 0u);
}

TEST_F(SelectionNetTest, TrainStepDeterministicUnderSeed) {
  const Graph graph = make_nl_csl(13, {2, 5});
  const SubgraphBag bag(graph, {3});
  EXPECT_EQ(select_step(bag, f, Mode::Train, 99), select_step(bag, f, Mode::Train, 99));
  std::set<NodeId> seen;
  for (std::uint64_t s = 0; s < 30; ++s) seen.insert(select_step(bag, f, Mode::Train, s));
  EXPECT_GT(seen.size(), 1u);
}

TEST_F(SelectionNetTest, MaskSelectedExcludesRoots) {
  const Graph graph = make_csl(13, 5);
  f.mask_selected = true;
  const SubgraphBag bag(graph, {0, 1, 2});
  for (std::uint64_t s = 0; s < 50; ++s) {
    EXPECT_GT(select_step(bag, f, Mode::Train, s), 2u);
  }
  EXPECT_GT(select_step(bag, f, Mode::Eval, 0), 2u);
}

TEST_F(SelectionNetTest, PipelineGradientMatchesFiniteDifferences) {
  const Graph graph = make_nl_csl(13, {2, 5});
  f.logit_dropout = 0.0;
  std::vector<StepRecord> frozen;
  {
    Tape tape;
    Context ctx(tape);
    Rng step_rng(5);
    frozen = run_pipeline(ctx, graph, f, g, 2, Mode::Train, step_rng).steps;
  }
  auto loss_fn = [&](Tape& tape) {
    Context ctx(tape);
    Rng unused(0);
    auto res = run_pipeline(ctx, graph, f, g, 2, Mode::Train, unused, &frozen);
    return pick(log_softmax(res.output, 1), 0, 1);
  };
  auto params = f.parameters();
  EXPECT_LT(finite_diff_check(loss_fn, params, 1e-4), 1e-3);
  auto gparams = g.parameters();
  EXPECT_LT(finite_diff_check(loss_fn, gparams, 1e-4), 1e-3);
}

TEST_F(SelectionNetTest, SelectionLogitGradient) {
  const Graph graph = make_nl_csl(13, {2, 5});
  auto params = f.parameters();
  const double err = finite_diff_check(
      [&](Tape& tape) {
        Context ctx(tape);
        const auto markings = bag_markings(ctx, SubgraphBag(graph, {3}));
        const Var logits = selection_logits(ctx, graph, markings, f);
        return sum_all(mul(logits, logits));
      },
      params, 1e-5);
  EXPECT_LT(err, 1e-4);
}

TEST_F(SelectionNetTest, SelectionMessagesScaleQuadratically) {
  const Graph graph = make_nl_csl(13, {2, 5});
  const std::size_t edge_msgs = 2 * graph.num_edges();  // n * max degree on a regular graph
  ASSERT_EQ(edge_msgs, graph.num_nodes() * max_degree(graph));
  for (std::size_t T : {1u, 2u, 4u, 8u}) {
    Tape tape;
    Context ctx(tape);
    Rng step_rng(T);
    const auto res = run_pipeline(ctx, graph, f, g, T, Mode::Train, step_rng);
    const std::size_t c = 2 * f.depth();
    EXPECT_EQ(res.selection_messages, c * T * (T + 1) / 2 * edge_msgs) << T;
  }
}
