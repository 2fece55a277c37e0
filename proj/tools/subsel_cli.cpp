// Command-line front end: dataset generation, theory checks, policy
// simulation, training and evaluation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "subsel/dataset.hpp"
#include "subsel/experiment.hpp"
#include "subsel/policy_analysis.hpp"
#include "subsel/serialization.hpp"
#include "subsel/verify.hpp"

namespace fs = std::filesystem;
using namespace subsel;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "ExperimentConfig JSON file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "Override the random seed");
  cmd->add_option("--out", args.out, "Output directory");
}

ExperimentConfig load_config(const CommonArgs& args) {
  ExperimentConfig cfg = args.config.empty() ? ExperimentConfig{} : config_from_json(read_json_file(args.config));
  if (args.seed) cfg.seed = *args.seed;
  return cfg;
}

fs::path out_dir(const CommonArgs& args) {
  fs::path dir = args.out.empty() ? fs::path(".") : fs::path(args.out);
  fs::create_directories(dir);
  return dir;
}

// Prints to stdout when --out is absent.
void emit(const CommonArgs& args, const std::string& file, const json& j) {
  if (args.out.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  const auto path = out_dir(args) / file;
  write_json_file(path.string(), j);
  std::cerr << "wrote " << path.string() << '\n';
}

Dataset load_dataset(const ExperimentConfig& cfg, const std::string& override_path) {
  const std::string path = override_path.empty() ? cfg.dataset_path : override_path;
  if (!path.empty()) {
    Dataset ds = dataset_from_json(read_json_file(path));
    if (ds.items.empty()) throw std::invalid_argument("dataset " + path + " is empty");
    return ds;
  }
  return make_family_dataset(cfg.n, cfg.skips, cfg.l, cfg.copies, cfg.seed);
}

std::string run_id(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << to_string(cfg.baseline) << "-T" << cfg.T << "-s" << cfg.seed;
  return os.str();
}

void write_metrics_csv(const fs::path& path, const ExperimentConfig& cfg, double metric,
                       double coverage) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "run_id,baseline,T,metric,coverage,seed\n";
  out << run_id(cfg) << ',' << to_string(cfg.baseline) << ',' << cfg.T << ',' << metric << ','
      << coverage << ',' << cfg.seed << '\n';
}

int cmd_generate(const CommonArgs& args) {
  const ExperimentConfig cfg = load_config(args);
  const Dataset ds = make_family_dataset(cfg.n, cfg.skips, cfg.l, cfg.copies, cfg.seed);
  emit(args, "dataset.json", dataset_to_json(ds));
  return 0;
}

int cmd_verify(const CommonArgs& args, std::size_t seeds, std::size_t trials) {
  VerifyOptions opt;
  opt.seed = args.seed.value_or(0);
  opt.seeds = seeds;
  opt.trials = trials;
  const auto results = run_all_suites(opt);
  std::printf("%-30s %8s %8s %6s %9s\n", "suite", "checks", "failures", "status", "time[s]");
  json report = json::array();
  bool all = true;
  for (const auto& r : results) {
    std::printf("%-30s %8zu %8zu %6s %9.3f\n", r.name.c_str(), r.checks, r.failures,
                r.passed() ? "PASS" : "FAIL", r.seconds);
    for (const auto& note : r.notes) std::printf("    %s\n", note.c_str());
    all = all && r.passed();
    report.push_back({{"suite", r.name},
                      {"checks", r.checks},
                      {"failures", r.failures},
                      {"passed", r.passed()},
                      {"notes", r.notes},
                      {"seconds", r.seconds}});
  }
  if (!args.out.empty()) write_json_file((out_dir(args) / "verify.json").string(), report);
  return all ? 0 : 1;
}

int cmd_policy_sim(const CommonArgs& args, std::size_t l, std::size_t n, std::size_t trials) {
  const std::uint64_t seed = args.seed.value_or(0);
  const auto success = random_success_mc(n, l, trials, seed);
  const auto draws = expected_draws_mc(n, l, trials, seed);
  json j{{"l", l},
         {"n", n},
         {"exact_prob", random_success_exact(static_cast<int>(l))},
         {"mc_prob", success.success_prob},
         {"exact_draws", expected_draws_exact(static_cast<int>(l))},
         {"mc_draws", draws.expected_draws},
         {"trials", trials},
         {"seed", seed}};
  emit(args, "policy_sim.json", j);
  return 0;
}

int cmd_train(const CommonArgs& args, const std::string& dataset_path) {
  const ExperimentConfig cfg = load_config(args);
  const Dataset ds = load_dataset(cfg, dataset_path);
  Model model;
  const RunReport report = cfg.baseline == Baseline::PolicyLearn ? run_policy_learn(cfg, ds, &model)
                                                                 : run_baseline(cfg, ds, &model);
  const fs::path dir = out_dir(args);
  write_json_file((dir / "report.json").string(), report_to_json(report));
  write_json_file((dir / "checkpoint.json").string(), checkpoint_to_json(model.parameters()));
  write_json_file((dir / "config.json").string(), config_to_json(cfg));
  write_metrics_csv(dir / "metrics.csv", cfg, report.final_metric, report.coverage);
  std::cout << run_id(cfg) << ": metric " << report.final_metric << ", coverage "
            << report.coverage << ", best epoch " << report.best_epoch << ", "
            << report.wall_time_s << " s\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint, const std::string& dataset_path) {
  const ExperimentConfig cfg = load_config(args);
  const Dataset ds = load_dataset(cfg, dataset_path);
  const std::size_t output_dim = cfg.task == Task::Classification ? ds.num_classes : 1;
  Model model = make_model(cfg, ds.items.front().graph.channels(), output_dim);
  load_checkpoint(read_json_file(checkpoint), model.parameters());
  const EvalMetrics m = evaluate(cfg, model, ds, Rng::derive(cfg.seed, 6));
  json j{{"metric", m.metric}, {"coverage", m.coverage}, {"loss", m.loss},
         {"selection_histogram", m.histogram}, {"size", ds.size()}};
  if (args.out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    const fs::path dir = out_dir(args);
    write_json_file((dir / "eval.json").string(), j);
    write_metrics_csv(dir / "eval.csv", cfg, m.metric, m.coverage);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned subgraph selection on circulant skip-link families"};
  app.require_subcommand(1);

  CommonArgs gen_args, ver_args, sim_args, train_args, eval_args;

  auto* gen = app.add_subcommand("generate", "Write a family dataset as JSON");
  add_common(gen, gen_args);

  auto* ver = app.add_subcommand("verify", "Run the theory checks and print a pass/fail table");
  add_common(ver, ver_args);
  std::size_t ver_seeds = 1000;
  std::size_t ver_trials = 100000;
  ver->add_option("--seeds", ver_seeds, "Selector runs per graph")->check(CLI::PositiveNumber);
  ver->add_option("--trials", ver_trials, "Monte-Carlo trials")->check(CLI::PositiveNumber);

  auto* sim = app.add_subcommand("policy-sim", "Random policy success rate and collector draws");
  add_common(sim, sim_args);
  std::size_t sim_l = 2;
  std::size_t sim_n = 13;
  std::size_t sim_trials = 100000;
  sim->add_option("-l", sim_l, "Number of components")->check(CLI::PositiveNumber);
  sim->add_option("-n", sim_n, "Nodes per component")->check(CLI::PositiveNumber);
  sim->add_option("--trials", sim_trials, "Monte-Carlo trials")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "Train policy-learn or a fixed-policy baseline");
  add_common(train, train_args);
  std::string train_dataset;
  train->add_option("--dataset", train_dataset, "Dataset JSON (default: generate from config)")
      ->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_common(ev, eval_args);
  std::string eval_checkpoint;
  std::string eval_dataset;
  ev->add_option("--checkpoint", eval_checkpoint, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
  ev->add_option("--dataset", eval_dataset, "Dataset JSON (default: generate from config)")
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_generate(gen_args);
    if (*ver) return cmd_verify(ver_args, ver_seeds, ver_trials);
    if (*sim) return cmd_policy_sim(sim_args, sim_l, sim_n, sim_trials);
    if (*train) return cmd_train(train_args, train_dataset);
    if (*ev) return cmd_eval(eval_args, eval_checkpoint, eval_dataset);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
