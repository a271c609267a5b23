// Command-line front end: train, eval, baseline and grid.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "swarmtrack/checkpoint.hpp"
#include "swarmtrack/config.hpp"
#include "swarmtrack/errors.hpp"
#include "swarmtrack/evalharness.hpp"
#include "swarmtrack/trainer.hpp"

namespace fs = std::filesystem;
using namespace swarmtrack;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const auto v = std::stoull(item, &used);
    if (used != item.size()) throw InvalidArgument("bad seed '" + item + "'");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw InvalidArgument("no seeds given");
  return seeds;
}

std::optional<int> parse_mask(const std::string& text) {
  if (text == "none") return std::nullopt;
  std::size_t used = 0;
  const int k = std::stoi(text, &used);
  if (used != text.size() || k < 1) throw InvalidArgument("--mask-k expects an integer >= 1 or none");
  return k;
}

void print_report(const eval::EvalReport& r) {
  std::cout << std::setw(10) << r.task.label << "  mask=" << std::setw(4)
            << (r.task.mask_k ? std::to_string(*r.task.mask_k) : "none") << "  mean=" << std::setw(10)
            << std::fixed << std::setprecision(3) << r.mean_return << "  std=" << r.std_across_seeds
            << "  (" << r.seed_count << " seeds x " << r.episodes_per_seed << " episodes)";
  if (r.normalized_score) std::cout << "  normalized=" << *r.normalized_score;
  std::cout << '\n';
}

// Options shared by eval and baseline.
struct EvalArgs {
  std::string tasks{"4a4t"};
  std::string mask{"none"};
  int episodes{50};
  std::string seeds{"0,1,2,3,4"};
  std::string out{"results.csv"};
  double eval_alpha{0.05};
  bool greedy{false};
  bool no_wall_time{false};
  std::string trace_dir;
  std::string world_config;
  int threads{1};
  bool fixed_map{false};

  void add_to(CLI::App* cmd) {
    cmd->add_option("--tasks", tasks, "Task grid, e.g. 4a4t,20a20t,1ka1kt");
    cmd->add_option("--episodes", episodes, "Episodes per seed")->check(CLI::PositiveNumber);
    cmd->add_option("--seeds", seeds, "Comma-separated seeds");
    cmd->add_option("--out", out, "Results CSV path");
    cmd->add_option("--eval-alpha", eval_alpha, "Sampling temperature for stochastic policies");
    cmd->add_flag("--greedy", greedy, "Act greedily even for stochastic checkpoints");
    cmd->add_flag("--no-wall-time", no_wall_time, "Write 0 in wall_time_s for reproducible CSVs");
    cmd->add_option("--trace-dir", trace_dir, "Directory for per-episode JSONL traces");
    cmd->add_option("--world-config", world_config,
                    "Experiment config whose world section sets the base world");
    cmd->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_flag("--fixed-map", fixed_map, "Keep the base map size for every task");
  }

  [[nodiscard]] eval::EvalOptions options() const {
    eval::EvalOptions o;
    if (!world_config.empty()) o.world_base = load_experiment_config(world_config).world;
    o.eval_alpha = eval_alpha;
    o.greedy_stochastic = greedy;
    o.record_wall_time = !no_wall_time;
    o.trace_dir = trace_dir;
    o.threads = threads;
    o.density_scaled_map = !fixed_map;
    return o;
  }
};

int run_train(const std::string& config_path, std::uint64_t seed, const fs::path& out_dir,
              bool quiet) {
  ExperimentConfig cfg;
  if (!config_path.empty()) cfg = load_experiment_config(config_path);
  fs::create_directories(out_dir);
  {
    std::ofstream resolved(out_dir / "config.json");
    resolved << to_json(cfg).dump(2) << '\n';
  }
  const auto result = trainer::train(cfg.world, cfg.net, cfg.train, seed,
                                     [&](const trainer::CurveRow& row) {
                                       if (quiet || row.episode % 50 != 0) return;
                                       std::cerr << "episode " << row.episode << "  steps "
                                                 << row.env_steps << "  task "
                                                 << eval::task_label(row.n, row.m) << "  return "
                                                 << row.online_return << "  loss "
                                                 << (row.has_loss ? std::to_string(row.loss) : "-")
                                                 << '\n';
                                     });
  {
    std::ofstream curve(out_dir / "curve.csv");
    trainer::write_curve_csv(curve, result.curve);
  }
  for (const auto& ckpt : result.checkpoints) {
    save_checkpoint(out_dir / ("ckpt_" + std::to_string(ckpt.env_steps) + ".ckpt"), ckpt);
  }
  std::cout << "wrote " << result.checkpoints.size() << " checkpoints and "
            << result.curve.size() << " curve rows to " << out_dir.string() << '\n';
  return 0;
}

int run_eval(const std::string& checkpoint, const EvalArgs& args) {
  const auto opts = args.options();
  const eval::QNetPolicy policy(load_checkpoint(checkpoint), opts.eval_alpha, opts.greedy_stochastic);
  const auto seeds = parse_seeds(args.seeds);
  const auto mask = parse_mask(args.mask);
  std::ofstream out(args.out);
  if (!out) throw InvalidArgument("cannot write " + args.out);
  eval::write_results_header(out);
  for (auto task : eval::parse_task_grid(args.tasks)) {
    task.mask_k = mask;
    const auto res = eval::evaluate(policy, checkpoint, task, args.episodes, seeds, opts);
    eval::write_results_rows(out, res.episodes);
    print_report(res.report);
  }
  return 0;
}

int run_baseline(const std::string& kind, const std::string& checkpoint, const EvalArgs& args) {
  const auto opts = args.options();
  const auto seeds = parse_seeds(args.seeds);
  std::optional<eval::QNetPolicy> policy;
  if (kind == "greedy") {
    if (checkpoint.empty()) throw InvalidArgument("greedy baseline needs --checkpoint");
    policy.emplace(load_checkpoint(checkpoint), opts.eval_alpha, opts.greedy_stochastic);
  }
  std::ofstream out(args.out);
  if (!out) throw InvalidArgument("cannot write " + args.out);
  eval::write_results_header(out);
  for (const auto& task : eval::parse_task_grid(args.tasks)) {
    const auto res = kind == "greedy"
                         ? eval::greedy_baseline(*policy, checkpoint, task, args.episodes, seeds, opts)
                         : eval::random_baseline(task, args.episodes, seeds, opts);
    eval::write_results_rows(out, res.episodes);
    print_report(res.report);
  }
  return 0;
}

int run_grid(const std::string& config_path) {
  const auto cfg = eval::parse_grid_config(read_text_file(config_path));
  for (const auto& res : eval::run_grid(cfg)) print_report(res.report);
  std::cout << "wrote " << cfg.out_csv.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent target tracking with set-based soft double Q-learning"};
  app.require_subcommand(1);

  std::string train_config;
  std::uint64_t train_seed = 0;
  std::string train_out = "run";
  bool quiet = false;
  auto* train = app.add_subcommand("train", "Train a shared policy");
  train->add_option("--config", train_config, "Experiment config (JSON)");
  train->add_option("--seed", train_seed, "Training seed");
  train->add_option("--out", train_out, "Output directory");
  train->add_flag("--quiet", quiet, "No progress output");

  EvalArgs eval_args;
  std::string eval_checkpoint;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint over a task grid");
  ev->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")->required();
  ev->add_option("--mask-k", eval_args.mask, "Keep the k nearest targets, or none");
  eval_args.add_to(ev);

  EvalArgs base_args;
  std::string base_kind;
  std::string base_checkpoint;
  auto* base = app.add_subcommand("baseline", "Greedy (k=1 mask) or random baseline");
  base->add_option("--kind", base_kind, "greedy or random")
      ->required()
      ->check(CLI::IsMember({"greedy", "random"}));
  base->add_option("--checkpoint", base_checkpoint, "Checkpoint for the greedy baseline");
  base_args.add_to(base);

  std::string grid_config;
  auto* grid = app.add_subcommand("grid", "Evaluate a grid described by a config file");
  grid->add_option("--config", grid_config, "Grid config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(train_config, train_seed, train_out, quiet);
    if (*ev) return run_eval(eval_checkpoint, eval_args);
    if (*base) return run_baseline(base_kind, base_checkpoint, base_args);
    if (*grid) return run_grid(grid_config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
