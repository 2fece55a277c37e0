#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "subsel/adam.hpp"
#include "subsel/bags.hpp"
#include "subsel/dataset.hpp"
#include "subsel/gnn.hpp"
#include "subsel/losses.hpp"
#include "subsel/rng.hpp"
#include "subsel/tensor.hpp"

namespace subsel {

enum class Task { Classification, Regression };
enum class Baseline { PolicyLearn, Random, Full, Oracle };

inline std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::PolicyLearn: return "policy-learn";
    case Baseline::Random: return "random";
    case Baseline::Full: return "full";
    case Baseline::Oracle: return "oracle";
  }
  return "?";
}

inline Baseline parse_baseline(const std::string& s) {
  if (s == "policy-learn") return Baseline::PolicyLearn;
  if (s == "random") return Baseline::Random;
  if (s == "full") return Baseline::Full;
  if (s == "oracle") return Baseline::Oracle;
  throw std::invalid_argument("unknown baseline '" + s + "'");
}

inline std::string to_string(Task t) {
  return t == Task::Classification ? "classification" : "regression";
}

inline Task parse_task(const std::string& s) {
  if (s == "classification") return Task::Classification;
  if (s == "regression") return Task::Regression;
  throw std::invalid_argument("unknown task '" + s + "'");
}

struct ExperimentConfig {
  Task task = Task::Classification;
  std::size_t T = 2;
  // Family description, used when dataset_path is empty.
  std::size_t n = 13;
  std::vector<std::size_t> skips{2, 3, 5};
  std::size_t l = 2;
  std::size_t copies = 10;
  std::string dataset_path;

  NetworkPlan selection{3, 16};
  NetworkPlan prediction{3, 16};
  double tau = 1.0;
  double logit_dropout = 0.0;
  std::optional<bool> mask_selected;  // default: on iff T >= 5
  double lr = 1e-3;
  std::size_t epochs = 500;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  Baseline baseline = Baseline::PolicyLearn;
  std::size_t eval_every = 1;

  bool masks_selected() const { return mask_selected.value_or(T >= 5); }

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
    if (!(tau > 0.0)) throw std::invalid_argument("config: tau must be positive");
    if (logit_dropout < 0.0 || logit_dropout >= 1.0) {
      throw std::invalid_argument("config: logit_dropout must be in [0, 1)");
    }
    if (batch_size < 1 || eval_every < 1) {
      throw std::invalid_argument("config: batch_size and eval_every must be >= 1");
    }
  }
};

struct EvalMetrics {
  double metric = 0.0;    // accuracy (classification) or MAE (regression)
  double coverage = 0.0;  // fraction of bags touching every component
  double loss = 0.0;
  std::vector<std::size_t> histogram;  // root counts per node id
};

struct RunReport {
  std::string baseline;
  std::size_t T = 0;
  std::uint64_t seed = 0;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_test_metric;
  std::vector<double> epoch_test_coverage;
  std::size_t best_epoch = 0;
  double final_metric = 0.0;
  double coverage = 0.0;
  double train_metric = 0.0;
  std::vector<std::size_t> selection_histogram;
  double wall_time_s = 0.0;  // excluded from determinism comparisons
};

// Both networks plus their optimizer states.
struct Model {
  SelectionNetParams f;
  PredictionNetParams g;
  AdamState f_state;
  AdamState g_state;

  std::vector<Parameter*> parameters() {
    auto out = f.parameters();
    for (auto* p : g.parameters()) out.push_back(p);
    return out;
  }
};

inline Model make_model(const ExperimentConfig& cfg, std::size_t in_channels,
                        std::size_t output_dim) {
  Rng rng(Rng::derive(cfg.seed, 1));
  Model m;
  m.f = make_selection_net(cfg.selection, in_channels, rng);
  m.f.tau = cfg.tau;
  m.f.logit_dropout = cfg.logit_dropout;
  m.f.mask_selected = cfg.masks_selected();
  m.g = make_prediction_net(cfg.prediction, in_channels, output_dim, rng);
  return m;
}

namespace detail {

inline Var example_loss(const ExperimentConfig& cfg, Var output, double label) {
  if (cfg.task == Task::Classification) {
    if (label < 0) throw std::out_of_range("negative class label");
    return cross_entropy(output, static_cast<std::size_t>(label));
  }
  return mae(output, Tensor(1, 1, label));
}

inline double example_metric(const ExperimentConfig& cfg, const Tensor& out, double label) {
  if (cfg.task == Task::Classification) {
    return argmax_index(out) == static_cast<std::size_t>(label) ? 1.0 : 0.0;
  }
  return std::fabs(out[0] - label);
}

// Roots from a non-learned policy. `stream` selects the random stream.
inline std::vector<NodeId> baseline_roots(const ExperimentConfig& cfg, const Graph& g,
                                          std::uint64_t stream) {
  switch (cfg.baseline) {
    case Baseline::Full: return full_bag(g).roots;
    case Baseline::Oracle: return oracle_policy(g).roots;
    case Baseline::Random:
      if (cfg.T == 0) return {};
      return random_policy(g, cfg.T, stream, !cfg.masks_selected()).roots;
    case Baseline::PolicyLearn: break;
  }
  throw std::logic_error("baseline_roots: policy-learn has no fixed policy");
}

struct Forward {
  Var output;
  std::vector<NodeId> roots;
};

inline Forward forward_example(const ExperimentConfig& cfg, Model& model, Context& ctx,
                               const Graph& g, Mode mode, Rng& rng) {
  if (cfg.baseline == Baseline::PolicyLearn) {
    auto res = run_pipeline(ctx, g, model.f, model.g, cfg.T, mode, rng);
    return {res.output, std::move(res.roots)};
  }
  const auto roots = baseline_roots(cfg, g, rng.next_u64());
  const SubgraphBag bag(g, roots);
  return {predict(ctx, g, bag_markings(ctx, bag), model.g), roots};
}

}  // namespace detail

inline EvalMetrics evaluate(const ExperimentConfig& cfg, Model& model, const Dataset& data,
                            std::uint64_t eval_seed) {
  EvalMetrics m;
  if (data.items.empty()) return m;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    const auto& item = data.items[i];
    Rng rng(Rng::derive(eval_seed, i));
    Tape tape;
    Context ctx(tape);
    auto fw = detail::forward_example(cfg, model, ctx, item.graph, Mode::Eval, rng);
    m.metric += detail::example_metric(cfg, fw.output.value(), item.label);
    m.loss += detail::example_loss(cfg, fw.output, item.label).value()[0];
    const SubgraphBag bag(item.graph, fw.roots);
    if (covers_all_components(bag, connected_components(item.graph))) ++covered;
    if (m.histogram.size() < item.graph.num_nodes()) m.histogram.resize(item.graph.num_nodes());
    for (NodeId v : fw.roots) ++m.histogram[v];
  }
  const double count = static_cast<double>(data.items.size());
  m.metric /= count;
  m.loss /= count;
  m.coverage = static_cast<double>(covered) / count;
  return m;
}

// Fixed epoch budget. The reported metrics come from the epoch with the best
// eval-mode metric on the training split (ties go to the later epoch).
inline RunReport run_experiment(const ExperimentConfig& cfg, const Dataset& train,
                                const Dataset& test, Model* out_model = nullptr) {
  cfg.validate();
  if (train.items.empty()) throw std::invalid_argument("run_experiment: empty training set");
  const auto start = std::chrono::steady_clock::now();
  const std::size_t in_channels = train.items.front().graph.channels();
  const std::size_t output_dim = cfg.task == Task::Classification ? train.num_classes : 1;
  if (output_dim == 0) throw std::invalid_argument("run_experiment: no classes");

  Model model = make_model(cfg, in_channels, output_dim);
  auto f_params = model.f.parameters();
  auto g_params = model.g.parameters();
  const AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};

  Rng order_rng(Rng::derive(cfg.seed, 2));
  Rng sample_rng(Rng::derive(cfg.seed, 3));
  const std::uint64_t eval_seed = Rng::derive(cfg.seed, 4);

  RunReport report;
  report.baseline = to_string(cfg.baseline);
  report.T = cfg.T;
  report.seed = cfg.seed;
  std::optional<double> best_train;
  std::vector<Tensor> best_values;

  std::vector<std::size_t> order(train.items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      Gradients batch;
      for (std::size_t k = b0; k < b1; ++k) {
        const auto& item = train.items[order[k]];
        Tape tape;
        Context ctx(tape);
        auto fw = detail::forward_example(cfg, model, ctx, item.graph, Mode::Train, sample_rng);
        const Var loss = detail::example_loss(cfg, fw.output, item.label);
        epoch_loss += loss.value()[0];
        const Gradients grads = tape.backward(loss);
        for (auto* p : f_params)
          if (const auto* gr = grads.find(*p)) batch.accumulate(*p, *gr);
        for (auto* p : g_params)
          if (const auto* gr = grads.find(*p)) batch.accumulate(*p, *gr);
      }
      batch.scale(1.0 / static_cast<double>(b1 - b0));
      adam_step(g_params, batch, model.g_state, adam);
      if (cfg.baseline == Baseline::PolicyLearn) adam_step(f_params, batch, model.f_state, adam);
    }
    report.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));

    const bool last = epoch + 1 == cfg.epochs;
    if ((epoch + 1) % cfg.eval_every != 0 && !last) continue;
    const auto train_eval = evaluate(cfg, model, train, eval_seed);
    const auto test_eval = evaluate(cfg, model, test, Rng::derive(eval_seed, 1));
    report.epoch_test_metric.push_back(test_eval.metric);
    report.epoch_test_coverage.push_back(test_eval.coverage);
    const bool better =
        !best_train || (cfg.task == Task::Classification ? train_eval.metric >= *best_train
                                                         : train_eval.metric <= *best_train);
    if (better) {
      best_train = train_eval.metric;
      report.best_epoch = epoch + 1;
      report.train_metric = train_eval.metric;
      report.final_metric = test_eval.metric;
      report.coverage = test_eval.coverage;
      report.selection_histogram = test_eval.histogram;
      best_values.clear();
      for (auto* p : model.parameters()) best_values.push_back(p->value);
    }
  }
  if (out_model) {
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
    *out_model = std::move(model);
  }
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

inline Split split_for(const ExperimentConfig& cfg, const Dataset& dataset) {
  return split_dataset(dataset, 0.8, Rng::derive(cfg.seed, 5));
}

// Trains f and g jointly; T = 0 degenerates to predicting on {G}.
inline RunReport run_policy_learn(ExperimentConfig cfg, const Dataset& dataset,
                                  Model* out_model = nullptr) {
  cfg.baseline = Baseline::PolicyLearn;
  const auto split = split_for(cfg, dataset);
  return run_experiment(cfg, split.train, split.test, out_model);
}

// Only g is trained; bags come from the named fixed policy.
inline RunReport run_baseline(const ExperimentConfig& cfg, const Dataset& dataset,
                              Model* out_model = nullptr) {
  if (cfg.baseline == Baseline::PolicyLearn) {
    throw std::invalid_argument("run_baseline: baseline must be random, full or oracle");
  }
  const auto split = split_for(cfg, dataset);
  return run_experiment(cfg, split.train, split.test, out_model);
}

}  // namespace subsel
