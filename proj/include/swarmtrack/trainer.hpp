#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "swarmtrack/checkpoint.hpp"
#include "swarmtrack/environment.hpp"
#include "swarmtrack/valuenet.hpp"

namespace swarmtrack::trainer {

enum class PolicyMode { kStochastic, kDeterministic };

/// Which networks induce the policy inside the soft target's expectation.
enum class SoftTargetPolicy { kTargetNets, kOnlineNets };

PolicyMode policy_mode_from_name(const std::string& name);
std::string policy_mode_name(PolicyMode mode);

/// Linear interpolation from `start` to `end` over `decay_steps` env steps,
/// constant afterwards. Used for both the temperature and epsilon.
struct LinearSchedule {
  double start{0.5};
  double end{0.05};
  std::int64_t decay_steps{100000};

  [[nodiscard]] double at(std::int64_t env_step) const;
};

struct TrainConfig {
  int max_agents{4};
  int max_targets{4};
  double gamma{0.99};
  double tau{0.005};
  LinearSchedule alpha{0.5, 0.05, 100000};
  int batch_size{256};
  int buffer_capacity{500000};
  double learning_rate{3e-4};
  double adam_beta1{0.9};
  double adam_beta2{0.999};
  double adam_epsilon{1e-8};
  double grad_clip_norm{10.0};
  int steps_per_update{1};
  std::int64_t total_env_steps{200000};
  std::int64_t eval_interval{50000};
  PolicyMode mode{PolicyMode::kStochastic};
  LinearSchedule epsilon{1.0, 0.05, 100000};
  /// Env steps collected before the first gradient update.
  std::int64_t warmup_steps{1000};
  /// Multiplier applied to rewards inside the TD target.
  double reward_scale{1.0};
  double huber_delta{1.0};
  SoftTargetPolicy soft_target_policy{SoftTargetPolicy::kTargetNets};
  /// False trains every sampled task on the base world's map; true resizes
  /// the map per task to keep 625 m^2 per agent.
  bool density_scaled_map{false};

  void validate() const;
};

struct Transition {
  encoding::FeatureSet s;
  int a{0};
  double r{0.0};
  encoding::FeatureSet s_next;
  bool done{false};
};

/// Fixed-capacity ring of transitions from every agent.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] std::size_t capacity() const { return capacity_; }
  [[nodiscard]] const Transition& at(std::size_t i) const { return data_.at(i); }
  /// Uniform with replacement over occupied slots.
  std::vector<std::size_t> sample_indices(std::size_t count, SeededStream& stream) const;

 private:
  std::size_t capacity_;
  std::size_t cursor_{0};
  std::vector<Transition> data_;
};

/// The two Q-networks of one role (online or target).
struct QNets {
  valuenet::NetParams<float> q1;
  valuenet::NetParams<float> q2;
};

/// n ~ U{1..max_agents}, m ~ U{1..max_targets}, independent.
std::pair<int, int> sample_task(const TrainConfig& cfg, SeededStream& stream);

/// softmax(q / alpha) with max subtraction.
std::vector<double> policy_distribution(std::span<const double> q, double alpha);
double entropy(std::span<const double> p);

double huber(double e, double delta = 1.0);
/// d huber / d e
double huber_grad(double e, double delta = 1.0);

/// Clipped double Q target from raw action values: the online sum picks a*,
/// the target minimum evaluates it.
double hard_target_from_values(double r, bool done, double gamma, std::span<const double> online1,
                               std::span<const double> online2, std::span<const double> target1,
                               std::span<const double> target2);

/// Entropy-regularized target. `policy_q` induces pi' (min over the chosen
/// pair); expectation and entropy bonus are taken per target net before the
/// minimum over nets.
double soft_target_from_values(double r, bool done, double gamma, double alpha,
                               std::span<const double> target1, std::span<const double> target2,
                               std::span<const double> policy_q);

/// r + gamma * max_a min_k target_k(a): the alpha -> 0 limit of the soft target.
double greedified_target_from_values(double r, bool done, double gamma,
                                     std::span<const double> target1,
                                     std::span<const double> target2);

std::vector<double> q_values(const encoding::FeatureSet& fs, const valuenet::NetParams<float>& net);
std::vector<double> elementwise_min(std::span<const double> a, std::span<const double> b);
/// Lowest index among maximal entries.
int argmax(std::span<const double> v);

double hard_double_q_target(const Transition& t, const QNets& online, const QNets& target,
                            double gamma);
double soft_double_q_target(const Transition& t, const QNets& target, double alpha, double gamma);

/// Stochastic: sample from policy_distribution(min_k Q_k, alpha).
/// Deterministic: uniform with probability epsilon, else argmax(Q_1 + Q_2).
int select_action_from_values(std::span<const double> q1, std::span<const double> q2,
                              double alpha, double epsilon, PolicyMode mode, SeededStream& stream);
int select_action(const encoding::FeatureSet& fs, const QNets& online, double alpha,
                  double epsilon, PolicyMode mode, SeededStream& stream);

struct UpdateStats {
  double loss{0.0};
  double grad_norm{0.0};
  double clipped_grad_norm{0.0};
};

/// Online and target network pairs with their optimizer state. Holds exactly
/// two online parameter sets however many agents feed it.
class SoftDoubleQLearner {
 public:
  SoftDoubleQLearner(const valuenet::NetConfig& net, const TrainConfig& cfg, SeededStream init);

  [[nodiscard]] const QNets& online() const { return online_; }
  [[nodiscard]] const QNets& target() const { return target_; }
  [[nodiscard]] const TrainConfig& config() const { return cfg_; }
  QNets& mutable_online() { return online_; }

  /// TD targets for a batch; uses only target nets in stochastic mode.
  std::vector<double> compute_targets(std::span<const Transition* const> batch, double alpha) const;

  /// One clipped adaptive-moment step on both online nets followed by Polyak
  /// averaging of both target nets. Throws TrainingDivergence on a non-finite loss.
  UpdateStats update_step(std::span<const Transition* const> batch, double alpha);

  [[nodiscard]] Checkpoint checkpoint(std::int64_t env_steps) const;

 private:
  struct AdamState {
    valuenet::NetParams<float> m;
    valuenet::NetParams<float> v;
  };

  void adam_apply(valuenet::NetParams<float>& params, const valuenet::Gradients<float>& grads,
                  AdamState& state) const;

  TrainConfig cfg_;
  QNets online_;
  QNets target_;
  AdamState adam1_;
  AdamState adam2_;
  std::int64_t adam_steps_{0};
};

struct EpisodeStats {
  double episode_return{0.0};
  int steps{0};
  std::size_t transitions{0};
};

/// Runs one full episode with every agent acting through the shared online
/// nets, appending one transition per agent per step.
EpisodeStats collect_episode(const env::WorldConfig& world, const QNets& online, PolicyMode mode,
                             double alpha, double epsilon, const SeededStream& episode_stream,
                             ReplayBuffer& buffer);

struct CurveRow {
  std::int64_t env_steps{0};
  std::int64_t episode{0};
  int n{0};
  int m{0};
  double online_return{0.0};
  double loss{0.0};
  bool has_loss{false};
  double alpha{0.0};
  double epsilon{0.0};
};

struct TrainResult {
  std::vector<Checkpoint> checkpoints;
  std::vector<CurveRow> curve;
};

using EpisodeCallback = std::function<void(const CurveRow&)>;

/// Alternates whole-episode collection on a freshly sampled task with a block
/// of updates, checkpointing every eval_interval env steps.
TrainResult train(const env::WorldConfig& world_base, const valuenet::NetConfig& net,
                  const TrainConfig& cfg, std::uint64_t seed,
                  const EpisodeCallback& on_episode = {});

/// CSV with header env_steps,episode,n,m,online_return,loss,alpha,epsilon.
void write_curve_csv(std::ostream& os, std::span<const CurveRow> rows);

}  // namespace swarmtrack::trainer
