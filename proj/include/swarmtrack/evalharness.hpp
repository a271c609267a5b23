#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "swarmtrack/checkpoint.hpp"
#include "swarmtrack/environment.hpp"

namespace swarmtrack::eval {

struct TaskSpec {
  int n_agents{1};
  int m_targets{1};
  std::optional<int> mask_k;
  std::string label;
};

/// "4a4t", "1ka1kt"; counts that are whole thousands use the k suffix.
std::string task_label(int n_agents, int m_targets);

/// Parses "NaMt[,NaMt...]"; a trailing k multiplies a count by 1000.
/// Throws InvalidArgument on malformed entries.
std::vector<TaskSpec> parse_task_grid(const std::string& spec);

/// Maps every agent's feature set to an action, one action per set.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void act(std::span<const encoding::FeatureSet> sets, SeededStream& stream,
                   std::vector<int>& actions) const = 0;
};

/// Acts through both networks of a checkpoint. Deterministic checkpoints (and
/// stochastic ones when `greedy` is set) take argmax of min(Q1, Q2); otherwise
/// the action is sampled from the softmax of min(Q1, Q2) at temperature `alpha`.
class QNetPolicy : public Policy {
 public:
  QNetPolicy(Checkpoint ckpt, double alpha, bool greedy);
  void act(std::span<const encoding::FeatureSet> sets, SeededStream& stream,
           std::vector<int>& actions) const override;
  [[nodiscard]] const Checkpoint& checkpoint() const { return ckpt_; }

 private:
  Checkpoint ckpt_;
  double alpha_;
  bool greedy_;
};

class RandomPolicy : public Policy {
 public:
  void act(std::span<const encoding::FeatureSet> sets, SeededStream& stream,
           std::vector<int>& actions) const override;
};

struct EvalOptions {
  env::WorldConfig world_base{};
  double eval_alpha{0.05};
  bool greedy_stochastic{false};
  /// When false every wall_time_s is written as 0 so output is reproducible.
  bool record_wall_time{true};
  /// Per-episode JSONL traces go here when non-empty.
  std::filesystem::path trace_dir;
  int threads{1};
  /// False keeps world_base.map_side for every task.
  bool density_scaled_map{true};
};

struct EpisodeRecord {
  std::string checkpoint;
  std::string task_label;
  int n{0};
  int m{0};
  std::optional<int> mask_k;
  std::uint64_t seed{0};
  int episode{0};
  double episode_return{0.0};
  double duplicate_assignment_rate{0.0};
  double wall_time_s{0.0};
};

struct EvalReport {
  std::string checkpoint;
  TaskSpec task;
  double mean_return{0.0};
  /// Sample standard deviation of the per-seed mean returns.
  double std_across_seeds{0.0};
  int episodes_per_seed{0};
  int seed_count{0};
  std::vector<double> seed_means;
  std::optional<double> normalized_score;
};

struct EvalResult {
  EvalReport report;
  std::vector<EpisodeRecord> episodes;  // seed-major, then episode
};

/// World for one task: map resized to keep 625 m^2 per agent unless
/// density scaling is off.
env::WorldConfig world_for_task(const EvalOptions& opts, const TaskSpec& task);

/// One full episode. Environment and policy randomness both come from
/// (seed, episode), so two policies see identical target motion.
EpisodeRecord run_episode(const Policy& policy, const std::string& checkpoint_name,
                          const TaskSpec& task, std::uint64_t seed, int episode,
                          const EvalOptions& opts, std::ostream* trace = nullptr);

EvalResult evaluate(const Policy& policy, const std::string& checkpoint_name, const TaskSpec& task,
                    int episodes, std::span<const std::uint64_t> seeds, const EvalOptions& opts);

/// evaluate() with the mask fixed to the single nearest target.
EvalResult greedy_baseline(const Policy& policy, const std::string& checkpoint_name,
                           const TaskSpec& task, int episodes,
                           std::span<const std::uint64_t> seeds, const EvalOptions& opts);

EvalResult random_baseline(const TaskSpec& task, int episodes, std::span<const std::uint64_t> seeds,
                           const EvalOptions& opts);

/// (policy - baseline) / |baseline|. Throws NormalizationError when baseline is 0.
double normalize_vs_baseline(double policy_mean, double baseline_mean);
/// Fills policy.normalized_score; the two reports must describe the same task.
void normalize_vs_baseline(EvalReport& policy, const EvalReport& baseline);

/// Header: checkpoint,task_label,n,m,mask_k,seed,episode,return,duplicate_assignment_rate,wall_time_s
void write_results_header(std::ostream& os);
void write_results_rows(std::ostream& os, std::span<const EpisodeRecord> rows);

/// Sum of the per-step rewards stored in a JSONL trace.
double recompute_return_from_trace(const std::filesystem::path& path);

struct GridConfig {
  std::vector<std::string> checkpoints;
  std::vector<TaskSpec> tasks;
  std::vector<std::optional<int>> masks{std::nullopt};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  int episodes{50};
  EvalOptions options{};
  std::filesystem::path out_csv{"results.csv"};
};

/// JSON object with keys checkpoints, tasks (grid-spec string or list),
/// masks (ints or null), seeds, episodes, out, eval_alpha, greedy,
/// record_wall_time, trace_dir, threads and an optional world section.
GridConfig parse_grid_config(const std::string& text);

/// Every (checkpoint, task, mask) cell in that order; writes the CSV.
std::vector<EvalResult> run_grid(const GridConfig& cfg);

}  // namespace swarmtrack::eval
