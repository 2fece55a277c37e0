#pragma once

#include <cstddef>
#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "subsel/bags.hpp"
#include "subsel/dataset.hpp"
#include "subsel/experiment.hpp"
#include "subsel/graph.hpp"
#include "subsel/tensor.hpp"
#include "subsel/wl.hpp"

namespace subsel {

using json = nlohmann::json;

// {"num_nodes": n, "edges": [[u, v], ...], "features": [[...], ...], "label": x}
// Edges appear once with u < v.
inline json graph_to_json(const Graph& g, std::optional<double> label = std::nullopt) {
  json edges = json::array();
  for (const auto& [u, v] : g.edges()) edges.push_back({u, v});
  json features = json::array();
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    json row = json::array();
    for (std::size_t c = 0; c < g.channels(); ++c) row.push_back(g.feature(v, c));
    features.push_back(std::move(row));
  }
  json out{{"num_nodes", g.num_nodes()}, {"edges", std::move(edges)},
           {"features", std::move(features)}};
  if (label) out["label"] = *label;
  return out;
}

inline Graph graph_from_json(const json& j) {
  const auto n = j.at("num_nodes").get<std::size_t>();
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw std::invalid_argument("graph json: bad edge");
    edges.emplace_back(e[0].get<NodeId>(), e[1].get<NodeId>());
  }
  if (!j.contains("features")) return Graph(n, std::move(edges));
  const auto& rows = j.at("features");
  if (rows.size() != n) throw std::invalid_argument("graph json: feature rows must equal num_nodes");
  const std::size_t c = n ? rows.at(0).size() : 0;
  std::vector<double> features;
  for (const auto& row : rows) {
    if (row.size() != c) throw std::invalid_argument("graph json: ragged features");
    for (const auto& x : row) features.push_back(x.get<double>());
  }
  return Graph(n, std::move(edges), std::move(features), c);
}

inline json bag_to_json(const SubgraphBag& bag) {
  return {{"graph", graph_to_json(bag.graph())}, {"roots", bag.roots}};
}

// The returned bag points into `storage`, which receives the decoded graph.
inline SubgraphBag bag_from_json(const json& j, Graph& storage) {
  storage = graph_from_json(j.at("graph"));
  return SubgraphBag(storage, j.at("roots").get<std::vector<NodeId>>());
}

// [[color, multiplicity], ...] sorted by color string.
inline json fingerprint_to_json(const WLFingerprint& fp) {
  json out = json::array();
  for (const auto& [color, mult] : fp.histogram) out.push_back({color, mult});
  return out;
}

inline WLFingerprint fingerprint_from_json(const json& j) {
  WLFingerprint fp;
  for (const auto& entry : j) {
    fp.histogram.emplace_back(entry.at(0).get<std::string>(), entry.at(1).get<std::size_t>());
  }
  return fp;
}

// {"path": {"shape": [r, c], "data": [...]}, ...}
inline json checkpoint_to_json(std::span<Parameter* const> params) {
  json out = json::object();
  for (const Parameter* p : params) {
    if (out.contains(p->name)) throw std::invalid_argument("checkpoint: duplicate name " + p->name);
    out[p->name] = {{"shape", p->value.shape()}, {"data", p->value.data()}};
  }
  return out;
}

// Every parameter must be present with a matching shape.
inline void load_checkpoint(const json& j, std::span<Parameter* const> params) {
  for (Parameter* p : params) {
    if (!j.contains(p->name)) throw std::invalid_argument("checkpoint: missing " + p->name);
    const auto& entry = j.at(p->name);
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != p->value.shape()) throw std::invalid_argument("checkpoint: shape mismatch for " + p->name);
    auto data = entry.at("data").get<std::vector<double>>();
    p->value = Tensor(shape.at(0), shape.at(1), std::move(data));
  }
}

inline json dataset_to_json(const Dataset& ds) {
  json graphs = json::array();
  for (const auto& item : ds.items) graphs.push_back(graph_to_json(item.graph, item.label));
  return graphs;
}

// A JSON array of graph objects. num_classes is 1 + the largest label.
inline Dataset dataset_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("dataset json: expected an array of graphs");
  Dataset ds;
  double max_label = -1.0;
  for (const auto& g : j) {
    const double label = g.value("label", 0.0);
    ds.items.push_back({graph_from_json(g), label});
    max_label = std::max(max_label, label);
  }
  ds.num_classes = max_label < 0 ? 0 : static_cast<std::size_t>(max_label) + 1;
  return ds;
}

inline json config_to_json(const ExperimentConfig& c) {
  json out{{"task", to_string(c.task)},
           {"T", c.T},
           {"n", c.n},
           {"skips", c.skips},
           {"l", c.l},
           {"copies", c.copies},
           {"selection", {{"layers", c.selection.layers}, {"width", c.selection.width}}},
           {"prediction", {{"layers", c.prediction.layers}, {"width", c.prediction.width}}},
           {"tau", c.tau},
           {"logit_dropout", c.logit_dropout},
           {"mask_selected", c.masks_selected()},
           {"lr", c.lr},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"seed", c.seed},
           {"baseline", to_string(c.baseline)},
           {"eval_every", c.eval_every}};
  if (!c.dataset_path.empty()) out["dataset"] = c.dataset_path;
  return out;
}

// Missing keys keep their defaults; unknown keys are rejected.
inline ExperimentConfig config_from_json(const json& j) {
  static const std::set<std::string> known{
      "task", "T", "n", "skips", "l", "copies", "dataset", "selection", "prediction", "tau",
      "logit_dropout", "mask_selected", "lr", "epochs", "batch_size", "seed", "baseline",
      "eval_every"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  ExperimentConfig c;
  if (j.contains("task")) c.task = parse_task(j.at("task").get<std::string>());
  c.T = j.value("T", c.T);
  c.n = j.value("n", c.n);
  c.skips = j.value("skips", c.skips);
  c.l = j.value("l", c.l);
  c.copies = j.value("copies", c.copies);
  c.dataset_path = j.value("dataset", std::string());
  auto plan = [&](const char* key, NetworkPlan& p) {
    if (!j.contains(key)) return;
    p.layers = j.at(key).value("layers", p.layers);
    p.width = j.at(key).value("width", p.width);
  };
  plan("selection", c.selection);
  plan("prediction", c.prediction);
  c.tau = j.value("tau", c.tau);
  c.logit_dropout = j.value("logit_dropout", c.logit_dropout);
  if (j.contains("mask_selected")) c.mask_selected = j.at("mask_selected").get<bool>();
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("baseline")) c.baseline = parse_baseline(j.at("baseline").get<std::string>());
  c.eval_every = j.value("eval_every", c.eval_every);
  c.validate();
  return c;
}

inline json report_to_json(const RunReport& r, bool include_wall_time = true) {
  json out{{"baseline", r.baseline},
           {"T", r.T},
           {"seed", r.seed},
           {"epoch_loss", r.epoch_loss},
           {"epoch_test_metric", r.epoch_test_metric},
           {"epoch_test_coverage", r.epoch_test_coverage},
           {"best_epoch", r.best_epoch},
           {"final_metric", r.final_metric},
           {"coverage", r.coverage},
           {"train_metric", r.train_metric},
           {"selection_histogram", r.selection_histogram}};
  if (include_wall_time) out["wall_time_s"] = r.wall_time_s;
  return out;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return json::parse(in);
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace subsel
