#include "swarmtrack/evalharness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "swarmtrack/config.hpp"
#include "swarmtrack/errors.hpp"
#include "swarmtrack/trainer.hpp"
#include "swarmtrack/valuenet.hpp"

namespace swarmtrack::eval {

using nlohmann::json;

namespace {

enum StreamTag : std::uint64_t { kEvalEpisode = 21, kEvalEnvironment = 22, kEvalPolicy = 23 };

int parse_count(const std::string& text, const std::string& entry) {
  if (text.empty()) throw InvalidArgument("task grid: missing count in '" + entry + "'");
  std::string digits = text;
  long long scale = 1;
  if (digits.back() == 'k') {
    scale = 1000;
    digits.pop_back();
  }
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit) ||
      digits.size() > 6) {
    throw InvalidArgument("task grid: bad count in '" + entry + "'");
  }
  const long long value = std::stoll(digits) * scale;
  if (value < 1 || value > std::numeric_limits<int>::max()) {
    throw InvalidArgument("task grid: count out of range in '" + entry + "'");
  }
  return static_cast<int>(value);
}

std::string count_label(int c) {
  return c % 1000 == 0 ? std::to_string(c / 1000) + "k" : std::to_string(c);
}

// Nearest believed target per agent, read off the unmasked feature sets.
double duplicate_rate(std::span<const encoding::FeatureSet> sets) {
  std::set<int> chosen;
  for (const auto& fs : sets) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < fs.features.size(); ++i) {
      if (fs.features[i].r < fs.features[best].r) best = i;
    }
    chosen.insert(fs.target_ids[best]);
  }
  const auto n = static_cast<double>(sets.size());
  return (n - static_cast<double>(chosen.size())) / n;
}

std::string mask_text(const std::optional<int>& k) {
  return k ? std::to_string(*k) : std::string("none");
}

std::string trace_name(const std::string& checkpoint, const TaskSpec& task, std::uint64_t seed,
                       int episode) {
  std::string stem = std::filesystem::path(checkpoint).stem().string();
  if (stem.empty()) stem = "policy";
  return stem + "_" + task.label + "_mask" + mask_text(task.mask_k) + "_seed" +
         std::to_string(seed) + "_ep" + std::to_string(episode) + ".jsonl";
}

void validate_task(const TaskSpec& task) {
  if (task.n_agents < 1 || task.m_targets < 1) {
    throw InvalidArgument("task " + task.label + ": counts must be >= 1");
  }
  if (task.mask_k && *task.mask_k < 1) throw InvalidArgument("mask_k must be >= 1");
}

// Runs job(i) for i in [0, count) on up to `threads` workers; the first
// exception (by index) is rethrown.
template <typename Job>
void parallel_for(std::size_t count, int threads, Job&& job) {
  const auto workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1,
                                               std::max<std::size_t>(count, 1));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

EvalReport summarize(const std::string& checkpoint, const TaskSpec& task, int episodes,
                     std::span<const std::uint64_t> seeds, std::span<const EpisodeRecord> rows) {
  EvalReport r;
  r.checkpoint = checkpoint;
  r.task = task;
  r.episodes_per_seed = episodes;
  r.seed_count = static_cast<int>(seeds.size());
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    double sum = 0.0;
    for (int e = 0; e < episodes; ++e) sum += rows[s * episodes + e].episode_return;
    r.seed_means.push_back(sum / episodes);
  }
  r.mean_return = std::accumulate(r.seed_means.begin(), r.seed_means.end(), 0.0) /
                  static_cast<double>(r.seed_means.size());
  if (r.seed_means.size() > 1) {
    double ss = 0.0;
    for (double m : r.seed_means) ss += (m - r.mean_return) * (m - r.mean_return);
    r.std_across_seeds = std::sqrt(ss / static_cast<double>(r.seed_means.size() - 1));
  }
  return r;
}

}  // namespace

std::string task_label(int n_agents, int m_targets) {
  return count_label(n_agents) + "a" + count_label(m_targets) + "t";
}

std::vector<TaskSpec> parse_task_grid(const std::string& spec) {
  std::vector<TaskSpec> out;
  std::stringstream ss(spec);
  std::string entry;
  while (std::getline(ss, entry, ',')) {
    entry.erase(std::remove_if(entry.begin(), entry.end(), ::isspace), entry.end());
    if (entry.empty()) continue;
    const auto a = entry.find('a');
    if (a == std::string::npos || entry.back() != 't' || a + 1 >= entry.size() - 1) {
      throw InvalidArgument("task grid: expected NaMt, got '" + entry + "'");
    }
    TaskSpec t;
    t.n_agents = parse_count(entry.substr(0, a), entry);
    t.m_targets = parse_count(entry.substr(a + 1, entry.size() - a - 2), entry);
    t.label = task_label(t.n_agents, t.m_targets);
    out.push_back(t);
  }
  if (out.empty()) throw InvalidArgument("task grid: no tasks in '" + spec + "'");
  return out;
}

QNetPolicy::QNetPolicy(Checkpoint ckpt, double alpha, bool greedy)
    : ckpt_(std::move(ckpt)), alpha_(alpha), greedy_(greedy || ckpt_.policy_mode == "deterministic") {
  if (!greedy_ && !(alpha_ > 0.0)) throw InvalidArgument("QNetPolicy: alpha must be positive");
}

void QNetPolicy::act(std::span<const encoding::FeatureSet> sets, SeededStream& stream,
                     std::vector<int>& actions) const {
  actions.assign(sets.size(), 0);
  // Sets are batched by cardinality; actions are then drawn in agent order.
  std::vector<std::vector<double>> qmin(sets.size());
  std::vector<std::size_t> order(sets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sets[a].size() < sets[b].size(); });
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo;
    while (hi < order.size() && sets[order[hi]].size() == sets[order[lo]].size()) ++hi;
    std::vector<const encoding::FeatureSet*> group;
    for (std::size_t i = lo; i < hi; ++i) group.push_back(&sets[order[i]]);
    const auto batch = valuenet::make_batch<float>(group);
    const auto q1 = valuenet::forward_batch(ckpt_.q1, batch);
    const auto q2 = valuenet::forward_batch(ckpt_.q2, batch);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto row = static_cast<Eigen::Index>(i - lo);
      auto& q = qmin[order[i]];
      q.resize(static_cast<std::size_t>(q1.cols()));
      for (Eigen::Index a = 0; a < q1.cols(); ++a) q[a] = std::min(q1(row, a), q2(row, a));
    }
    lo = hi;
  }
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (greedy_) {
      actions[i] = trainer::argmax(qmin[i]);
      continue;
    }
    const auto p = trainer::policy_distribution(qmin[i], alpha_);
    const double u = stream.uniform();
    double acc = 0.0;
    int chosen = static_cast<int>(p.size()) - 1;
    for (std::size_t a = 0; a < p.size(); ++a) {
      acc += p[a];
      if (u < acc) {
        chosen = static_cast<int>(a);
        break;
      }
    }
    actions[i] = chosen;
  }
}

void RandomPolicy::act(std::span<const encoding::FeatureSet> sets, SeededStream& stream,
                       std::vector<int>& actions) const {
  actions.resize(sets.size());
  for (auto& a : actions) a = static_cast<int>(stream.uniform_int(0, kNumActions - 1));
}

env::WorldConfig world_for_task(const EvalOptions& opts, const TaskSpec& task) {
  env::WorldConfig w = env::config_for_task(opts.world_base, task.n_agents, task.m_targets);
  if (!opts.density_scaled_map) w.map_side = opts.world_base.map_side;
  return w;
}

EpisodeRecord run_episode(const Policy& policy, const std::string& checkpoint_name,
                          const TaskSpec& task, std::uint64_t seed, int episode,
                          const EvalOptions& opts, std::ostream* trace) {
  validate_task(task);
  const auto start = std::chrono::steady_clock::now();
  const env::WorldConfig world = world_for_task(opts, task);
  const SeededStream ep = SeededStream(seed).derive(kEvalEpisode, static_cast<std::uint64_t>(episode));
  auto [state, obs] = env::reset(world, ep.derive(kEvalEnvironment));
  SeededStream policy_stream = ep.derive(kEvalPolicy);

  EpisodeRecord rec;
  rec.checkpoint = checkpoint_name;
  rec.task_label = task.label;
  rec.n = task.n_agents;
  rec.m = task.m_targets;
  rec.mask_k = task.mask_k;
  rec.seed = seed;
  rec.episode = episode;

  if (trace) {
    *trace << json{{"checkpoint", checkpoint_name}, {"task", task.label}, {"n", task.n_agents},
                   {"m", task.m_targets}, {"mask_k", task.mask_k ? json(*task.mask_k) : json()},
                   {"seed", seed}, {"episode", episode}}
                  .dump()
           << '\n';
  }

  std::vector<encoding::FeatureSet> masked;
  std::vector<int> actions;
  double dup_sum = 0.0;
  int steps = 0;
  while (!state.done) {
    dup_sum += duplicate_rate(obs.per_agent_features);
    std::span<const encoding::FeatureSet> sets = obs.per_agent_features;
    if (task.mask_k && *task.mask_k < task.m_targets) {
      masked.clear();
      for (const auto& fs : obs.per_agent_features) {
        masked.push_back(encoding::mask_k_nearest(fs, *task.mask_k));
      }
      sets = masked;
    }
    policy.act(sets, policy_stream, actions);
    obs = env::step(state, actions, world);
    rec.episode_return += obs.reward;
    ++steps;
    if (trace) {
      *trace << json{{"step", steps}, {"reward", obs.reward}, {"actions", actions}}.dump() << '\n';
    }
  }
  rec.duplicate_assignment_rate = steps > 0 ? dup_sum / steps : 0.0;
  if (opts.record_wall_time) {
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return rec;
}

EvalResult evaluate(const Policy& policy, const std::string& checkpoint_name, const TaskSpec& task,
                    int episodes, std::span<const std::uint64_t> seeds, const EvalOptions& opts) {
  validate_task(task);
  if (episodes < 1) throw InvalidArgument("evaluate: episodes must be >= 1");
  if (seeds.empty()) throw InvalidArgument("evaluate: at least one seed required");
  if (!opts.trace_dir.empty()) std::filesystem::create_directories(opts.trace_dir);

  const std::size_t total = seeds.size() * static_cast<std::size_t>(episodes);
  EvalResult result;
  result.episodes.resize(total);
  parallel_for(total, opts.threads, [&](std::size_t i) {
    const std::uint64_t seed = seeds[i / episodes];
    const int episode = static_cast<int>(i % episodes);
    if (opts.trace_dir.empty()) {
      result.episodes[i] = run_episode(policy, checkpoint_name, task, seed, episode, opts);
    } else {
      std::ofstream trace(opts.trace_dir / trace_name(checkpoint_name, task, seed, episode));
      if (!trace) throw InvalidArgument("cannot write trace in " + opts.trace_dir.string());
      result.episodes[i] = run_episode(policy, checkpoint_name, task, seed, episode, opts, &trace);
    }
  });
  result.report = summarize(checkpoint_name, task, episodes, seeds, result.episodes);
  return result;
}

EvalResult greedy_baseline(const Policy& policy, const std::string& checkpoint_name,
                           const TaskSpec& task, int episodes,
                           std::span<const std::uint64_t> seeds, const EvalOptions& opts) {
  TaskSpec t = task;
  t.mask_k = 1;
  return evaluate(policy, checkpoint_name, t, episodes, seeds, opts);
}

EvalResult random_baseline(const TaskSpec& task, int episodes, std::span<const std::uint64_t> seeds,
                           const EvalOptions& opts) {
  const RandomPolicy policy;
  return evaluate(policy, "random", task, episodes, seeds, opts);
}

double normalize_vs_baseline(double policy_mean, double baseline_mean) {
  if (baseline_mean == 0.0) throw NormalizationError("baseline mean is zero");
  return (policy_mean - baseline_mean) / std::abs(baseline_mean);
}

void normalize_vs_baseline(EvalReport& policy, const EvalReport& baseline) {
  if (policy.task.n_agents != baseline.task.n_agents ||
      policy.task.m_targets != baseline.task.m_targets) {
    throw InvalidArgument("normalize_vs_baseline: reports cover different tasks");
  }
  policy.normalized_score = normalize_vs_baseline(policy.mean_return, baseline.mean_return);
}

void write_results_header(std::ostream& os) {
  os << "checkpoint,task_label,n,m,mask_k,seed,episode,return,duplicate_assignment_rate,"
        "wall_time_s\n";
}

void write_results_rows(std::ostream& os, std::span<const EpisodeRecord> rows) {
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : rows) {
    os << r.checkpoint << ',' << r.task_label << ',' << r.n << ',' << r.m << ','
       << mask_text(r.mask_k) << ',' << r.seed << ',' << r.episode << ',' << r.episode_return
       << ',' << r.duplicate_assignment_rate << ',' << r.wall_time_s << '\n';
  }
  os.precision(old);
}

double recompute_return_from_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open trace " + path.string());
  double total = 0.0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (j.contains("reward")) total += j.at("reward").get<double>();
  }
  return total;
}

GridConfig parse_grid_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("grid config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("grid config: expected an object");
  static const std::set<std::string> allowed{
      "checkpoints", "tasks",           "masks",     "seeds",   "episodes", "out",
      "eval_alpha",  "greedy",          "record_wall_time", "trace_dir", "threads", "world",
      "density_scaled_map"};
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("grid config: unknown key '" + key + "'");
  }
  GridConfig g;
  try {
    g.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
    const auto& tasks = j.at("tasks");
    if (tasks.is_string()) {
      g.tasks = parse_task_grid(tasks.get<std::string>());
    } else {
      for (const auto& t : tasks) {
        const auto parsed = parse_task_grid(t.get<std::string>());
        g.tasks.insert(g.tasks.end(), parsed.begin(), parsed.end());
      }
    }
    if (j.contains("masks")) {
      g.masks.clear();
      for (const auto& m : j.at("masks")) {
        if (m.is_null() || (m.is_string() && m.get<std::string>() == "none")) {
          g.masks.emplace_back(std::nullopt);
        } else {
          g.masks.emplace_back(m.get<int>());
        }
      }
    }
    if (j.contains("seeds")) g.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("episodes")) g.episodes = j.at("episodes").get<int>();
    if (j.contains("out")) g.out_csv = j.at("out").get<std::string>();
    if (j.contains("eval_alpha")) g.options.eval_alpha = j.at("eval_alpha").get<double>();
    if (j.contains("greedy")) g.options.greedy_stochastic = j.at("greedy").get<bool>();
    if (j.contains("record_wall_time")) {
      g.options.record_wall_time = j.at("record_wall_time").get<bool>();
    }
    if (j.contains("trace_dir")) g.options.trace_dir = j.at("trace_dir").get<std::string>();
    if (j.contains("threads")) g.options.threads = j.at("threads").get<int>();
    if (j.contains("density_scaled_map")) {
      g.options.density_scaled_map = j.at("density_scaled_map").get<bool>();
    }
    if (j.contains("world")) from_json(j.at("world"), g.options.world_base);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("grid config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("grid config: ") + e.what());
  }
  if (g.checkpoints.empty()) throw ConfigError("grid config: no checkpoints");
  if (g.episodes < 1) throw ConfigError("grid config: episodes must be >= 1");
  if (g.seeds.empty()) throw ConfigError("grid config: no seeds");
  for (const auto& m : g.masks) {
    if (m && *m < 1) throw ConfigError("grid config: mask values must be >= 1 or null");
  }
  return g;
}

std::vector<EvalResult> run_grid(const GridConfig& cfg) {
  std::ofstream out(cfg.out_csv);
  if (!out) throw ConfigError("cannot write " + cfg.out_csv.string());
  write_results_header(out);
  std::vector<EvalResult> results;
  for (const auto& path : cfg.checkpoints) {
    const QNetPolicy policy(load_checkpoint(path), cfg.options.eval_alpha,
                            cfg.options.greedy_stochastic);
    for (const auto& base : cfg.tasks) {
      for (const auto& mask : cfg.masks) {
        TaskSpec task = base;
        task.mask_k = mask;
        results.push_back(evaluate(policy, path, task, cfg.episodes, cfg.seeds, cfg.options));
        write_results_rows(out, results.back().episodes);
      }
    }
  }
  return results;
}

}  // namespace swarmtrack::eval
