#include "swarmtrack/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <string>

#include "swarmtrack/errors.hpp"

namespace swarmtrack::trainer {

namespace {

using valuenet::Matrix;
using valuenet::NetParams;

enum StreamTag : std::uint64_t {
  kInitQ1 = 11,
  kInitQ2 = 12,
  kTaskSampling = 13,
  kEpisode = 14,
  kReplay = 15,
  kEnvironment = 16,
  kPolicy = 17,
};

std::vector<double> row_values(const Matrix<float>& q, Eigen::Index row) {
  std::vector<double> out(static_cast<std::size_t>(q.cols()));
  for (Eigen::Index a = 0; a < q.cols(); ++a) out[static_cast<std::size_t>(a)] = q(row, a);
  return out;
}

// Groups batch positions by the cardinality of their feature sets.
std::map<std::size_t, std::vector<std::size_t>> group_by_size(
    std::span<const Transition* const> batch) {
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < batch.size(); ++i) groups[batch[i]->s.size()].push_back(i);
  return groups;
}

template <typename Getter>
valuenet::SetBatch<float> gather(std::span<const Transition* const> batch,
                                 const std::vector<std::size_t>& idx, Getter get) {
  std::vector<const encoding::FeatureSet*> sets;
  sets.reserve(idx.size());
  for (std::size_t i : idx) sets.push_back(&get(*batch[i]));
  return valuenet::make_batch<float>(sets);
}

double squared_norm(const NetParams<float>& g) {
  double s = 0.0;
  for (const auto& t : g.tensors) s += t.cast<double>().squaredNorm();
  return s;
}

void scale_in_place(NetParams<float>& g, float factor) {
  for (auto& t : g.tensors) t *= factor;
}

}  // namespace

PolicyMode policy_mode_from_name(const std::string& name) {
  if (name == "stochastic") return PolicyMode::kStochastic;
  if (name == "deterministic") return PolicyMode::kDeterministic;
  throw InvalidArgument("unknown policy mode: " + name);
}

std::string policy_mode_name(PolicyMode mode) {
  return mode == PolicyMode::kStochastic ? "stochastic" : "deterministic";
}

double LinearSchedule::at(std::int64_t env_step) const {
  if (decay_steps <= 0 || env_step >= decay_steps) return end;
  const double frac = static_cast<double>(env_step) / static_cast<double>(decay_steps);
  return start + (end - start) * frac;
}

void TrainConfig::validate() const {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("TrainConfig: ") + what);
  };
  require(max_agents >= 1 && max_targets >= 1, "max_agents and max_targets must be >= 1");
  require(gamma > 0.0 && gamma < 1.0, "gamma must be in (0, 1)");
  require(tau >= 0.0 && tau <= 1.0, "tau must be in [0, 1]");
  require(alpha.start > 0.0 && alpha.end > 0.0 && alpha.end <= alpha.start,
          "alpha schedule must be positive and non-increasing");
  require(epsilon.start >= 0.0 && epsilon.start <= 1.0 && epsilon.end >= 0.0 &&
              epsilon.end <= 1.0,
          "epsilon schedule must stay in [0, 1]");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(buffer_capacity >= 1, "buffer_capacity must be >= 1");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(grad_clip_norm > 0.0, "grad_clip_norm must be positive");
  require(steps_per_update >= 1, "steps_per_update must be >= 1");
  require(total_env_steps >= 0, "total_env_steps must be >= 0");
  require(eval_interval >= 1, "eval_interval must be >= 1");
  require(warmup_steps >= 0, "warmup_steps must be >= 0");
  require(reward_scale > 0.0, "reward_scale must be positive");
  require(huber_delta > 0.0, "huber_delta must be positive");
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw InvalidArgument("ReplayBuffer: capacity must be positive");
  data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (t.s.size() != t.s_next.size()) {
    throw InvalidArgument("ReplayBuffer: s and s_next differ in cardinality");
  }
  if (!std::isfinite(t.r)) throw InvalidArgument("ReplayBuffer: non-finite reward");
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[cursor_] = std::move(t);
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t count,
                                                      SeededStream& stream) const {
  if (data_.empty()) throw InvalidArgument("ReplayBuffer: sampling from an empty buffer");
  std::vector<std::size_t> out(count);
  const auto hi = static_cast<std::int64_t>(data_.size()) - 1;
  for (auto& i : out) i = static_cast<std::size_t>(stream.uniform_int(0, hi));
  return out;
}

std::pair<int, int> sample_task(const TrainConfig& cfg, SeededStream& stream) {
  if (cfg.max_agents < 1 || cfg.max_targets < 1) {
    throw InvalidArgument("sample_task: maxima must be >= 1");
  }
  const auto n = static_cast<int>(stream.uniform_int(1, cfg.max_agents));
  const auto m = static_cast<int>(stream.uniform_int(1, cfg.max_targets));
  return {n, m};
}

std::vector<double> policy_distribution(std::span<const double> q, double alpha) {
  if (q.empty()) throw InvalidArgument("policy_distribution: no actions");
  if (!(alpha > 0.0)) throw InvalidArgument("policy_distribution: alpha must be positive");
  const double mx = *std::max_element(q.begin(), q.end());
  std::vector<double> p(q.size());
  double total = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a) {
    p[a] = std::exp((q[a] - mx) / alpha);
    total += p[a];
  }
  for (double& v : p) v /= total;
  return p;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double huber(double e, double delta) {
  const double a = std::abs(e);
  return a <= delta ? 0.5 * e * e : delta * (a - 0.5 * delta);
}

double huber_grad(double e, double delta) { return std::clamp(e, -delta, delta); }

std::vector<double> elementwise_min(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("elementwise_min: size mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::min(a[i], b[i]);
  return out;
}

int argmax(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("argmax: empty input");
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

double hard_target_from_values(double r, bool done, double gamma, std::span<const double> online1,
                               std::span<const double> online2, std::span<const double> target1,
                               std::span<const double> target2) {
  if (done) return r;
  std::vector<double> sum(online1.size());
  for (std::size_t a = 0; a < sum.size(); ++a) sum[a] = online1[a] + online2[a];
  const auto best = static_cast<std::size_t>(argmax(sum));
  return r + gamma * std::min(target1[best], target2[best]);
}

double soft_target_from_values(double r, bool done, double gamma, double alpha,
                               std::span<const double> target1, std::span<const double> target2,
                               std::span<const double> policy_q) {
  if (done) return r;
  const std::vector<double> pi = policy_distribution(policy_q, alpha);
  double soft1 = 0.0;
  double soft2 = 0.0;
  for (std::size_t a = 0; a < pi.size(); ++a) {
    if (pi[a] <= 0.0) continue;
    const double bonus = alpha * std::log(pi[a]);
    soft1 += pi[a] * (target1[a] - bonus);
    soft2 += pi[a] * (target2[a] - bonus);
  }
  return r + gamma * std::min(soft1, soft2);
}

double greedified_target_from_values(double r, bool done, double gamma,
                                     std::span<const double> target1,
                                     std::span<const double> target2) {
  if (done) return r;
  const std::vector<double> mins = elementwise_min(target1, target2);
  return r + gamma * *std::max_element(mins.begin(), mins.end());
}

std::vector<double> q_values(const encoding::FeatureSet& fs, const NetParams<float>& net) {
  const valuenet::Vector<float> q = valuenet::forward(fs, net);
  return {q.data(), q.data() + q.size()};
}

double hard_double_q_target(const Transition& t, const QNets& online, const QNets& target,
                            double gamma) {
  if (t.done) return t.r;
  return hard_target_from_values(t.r, t.done, gamma, q_values(t.s_next, online.q1),
                                 q_values(t.s_next, online.q2), q_values(t.s_next, target.q1),
                                 q_values(t.s_next, target.q2));
}

double soft_double_q_target(const Transition& t, const QNets& target, double alpha, double gamma) {
  if (t.done) return t.r;
  const auto t1 = q_values(t.s_next, target.q1);
  const auto t2 = q_values(t.s_next, target.q2);
  return soft_target_from_values(t.r, t.done, gamma, alpha, t1, t2, elementwise_min(t1, t2));
}

int select_action_from_values(std::span<const double> q1, std::span<const double> q2,
                              double alpha, double epsilon, PolicyMode mode, SeededStream& stream) {
  const auto n_actions = static_cast<std::int64_t>(q1.size());
  if (mode == PolicyMode::kStochastic) {
    const std::vector<double> p = policy_distribution(elementwise_min(q1, q2), alpha);
    const double u = stream.uniform();
    double acc = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) {
      acc += p[a];
      if (u < acc) return static_cast<int>(a);
    }
    // rounding left u above the cumulative total; take the last action with mass
    for (std::size_t a = p.size(); a-- > 0;) {
      if (p[a] > 0.0) return static_cast<int>(a);
    }
    return 0;
  }
  if (epsilon > 0.0 && stream.uniform() < epsilon) {
    return static_cast<int>(stream.uniform_int(0, n_actions - 1));
  }
  std::vector<double> sum(q1.size());
  for (std::size_t a = 0; a < sum.size(); ++a) sum[a] = q1[a] + q2[a];
  return argmax(sum);
}

int select_action(const encoding::FeatureSet& fs, const QNets& online, double alpha,
                  double epsilon, PolicyMode mode, SeededStream& stream) {
  return select_action_from_values(q_values(fs, online.q1), q_values(fs, online.q2), alpha,
                                   epsilon, mode, stream);
}

SoftDoubleQLearner::SoftDoubleQLearner(const valuenet::NetConfig& net, const TrainConfig& cfg,
                                       SeededStream init)
    : cfg_(cfg) {
  cfg_.validate();
  SeededStream s1 = init.derive(kInitQ1);
  SeededStream s2 = init.derive(kInitQ2);
  online_.q1 = valuenet::init_params<float>(net, s1);
  online_.q2 = valuenet::init_params<float>(net, s2);
  target_ = online_;
  adam1_ = {valuenet::zeros_like(online_.q1), valuenet::zeros_like(online_.q1)};
  adam2_ = {valuenet::zeros_like(online_.q2), valuenet::zeros_like(online_.q2)};
}

std::vector<double> SoftDoubleQLearner::compute_targets(std::span<const Transition* const> batch,
                                                        double alpha) const {
  std::vector<double> y(batch.size());
  const double gamma = cfg_.gamma;
  for (const auto& [size, idx] : group_by_size(batch)) {
    const auto next = gather(batch, idx, [](const Transition& t) -> const auto& { return t.s_next; });
    const Matrix<float> t1 = valuenet::forward_batch(target_.q1, next);
    const Matrix<float> t2 = valuenet::forward_batch(target_.q2, next);
    Matrix<float> o1, o2;
    const bool need_online = cfg_.mode == PolicyMode::kDeterministic ||
                             cfg_.soft_target_policy == SoftTargetPolicy::kOnlineNets;
    if (need_online) {
      o1 = valuenet::forward_batch(online_.q1, next);
      o2 = valuenet::forward_batch(online_.q2, next);
    }
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const Transition& t = *batch[idx[k]];
      const double r = cfg_.reward_scale * t.r;
      const auto row = static_cast<Eigen::Index>(k);
      const auto v1 = row_values(t1, row);
      const auto v2 = row_values(t2, row);
      if (cfg_.mode == PolicyMode::kDeterministic) {
        y[idx[k]] = hard_target_from_values(r, t.done, gamma, row_values(o1, row),
                                            row_values(o2, row), v1, v2);
      } else if (cfg_.soft_target_policy == SoftTargetPolicy::kOnlineNets) {
        y[idx[k]] = soft_target_from_values(
            r, t.done, gamma, alpha, v1, v2,
            elementwise_min(row_values(o1, row), row_values(o2, row)));
      } else {
        y[idx[k]] = soft_target_from_values(r, t.done, gamma, alpha, v1, v2, elementwise_min(v1, v2));
      }
    }
  }
  return y;
}

void SoftDoubleQLearner::adam_apply(NetParams<float>& params, const valuenet::Gradients<float>& g,
                                    AdamState& state) const {
  const auto b1 = static_cast<float>(cfg_.adam_beta1);
  const auto b2 = static_cast<float>(cfg_.adam_beta2);
  const auto eps = static_cast<float>(cfg_.adam_epsilon);
  const double t = static_cast<double>(adam_steps_);
  const auto lr_t = static_cast<float>(cfg_.learning_rate * std::sqrt(1.0 - std::pow(cfg_.adam_beta2, t)) /
                                       (1.0 - std::pow(cfg_.adam_beta1, t)));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& m = state.m.tensors[i];
    auto& v = state.v.tensors[i];
    m = b1 * m + (1.0f - b1) * g.tensors[i];
    v = b2 * v + (1.0f - b2) * g.tensors[i].cwiseProduct(g.tensors[i]);
    params.tensors[i].array() -= lr_t * m.array() / (v.array().sqrt() + eps);
  }
}

UpdateStats SoftDoubleQLearner::update_step(std::span<const Transition* const> batch, double alpha) {
  if (batch.empty()) throw InvalidArgument("update_step: empty batch");
  const std::vector<double> y = compute_targets(batch, alpha);

  valuenet::Gradients<float> g1 = valuenet::zeros_like(online_.q1);
  valuenet::Gradients<float> g2 = valuenet::zeros_like(online_.q2);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  const double delta = cfg_.huber_delta;
  double loss = 0.0;

  for (const auto& [size, idx] : group_by_size(batch)) {
    const auto states = gather(batch, idx, [](const Transition& t) -> const auto& { return t.s; });
    valuenet::ForwardCache<float> c1, c2;
    const Matrix<float> q1 = valuenet::forward_batch(online_.q1, states, &c1);
    const Matrix<float> q2 = valuenet::forward_batch(online_.q2, states, &c2);
    Matrix<float> d1 = Matrix<float>::Zero(q1.rows(), q1.cols());
    Matrix<float> d2 = Matrix<float>::Zero(q2.rows(), q2.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const Transition& t = *batch[idx[k]];
      const auto row = static_cast<Eigen::Index>(k);
      const double e1 = q1(row, t.a) - y[idx[k]];
      const double e2 = q2(row, t.a) - y[idx[k]];
      loss += (huber(e1, delta) + huber(e2, delta)) * inv_batch;
      d1(row, t.a) = static_cast<float>(huber_grad(e1, delta) * inv_batch);
      d2(row, t.a) = static_cast<float>(huber_grad(e2, delta) * inv_batch);
    }
    valuenet::backward_batch(online_.q1, c1, d1, g1);
    valuenet::backward_batch(online_.q2, c2, d2, g2);
  }

  if (!std::isfinite(loss)) {
    throw TrainingDivergence("update_step: non-finite loss (" + std::to_string(loss) + ")");
  }

  UpdateStats stats;
  stats.loss = loss;
  stats.grad_norm = std::sqrt(squared_norm(g1) + squared_norm(g2));
  if (!std::isfinite(stats.grad_norm)) {
    throw TrainingDivergence("update_step: non-finite gradient norm");
  }
  if (stats.grad_norm > cfg_.grad_clip_norm) {
    const auto factor = static_cast<float>(cfg_.grad_clip_norm / stats.grad_norm);
    scale_in_place(g1, factor);
    scale_in_place(g2, factor);
  }
  stats.clipped_grad_norm = std::sqrt(squared_norm(g1) + squared_norm(g2));

  ++adam_steps_;
  adam_apply(online_.q1, g1, adam1_);
  adam_apply(online_.q2, g2, adam2_);
  target_.q1 = valuenet::polyak_update(target_.q1, online_.q1, cfg_.tau);
  target_.q2 = valuenet::polyak_update(target_.q2, online_.q2, cfg_.tau);
  return stats;
}

Checkpoint SoftDoubleQLearner::checkpoint(std::int64_t env_steps) const {
  Checkpoint c;
  c.net = online_.q1.config;
  c.policy_mode = policy_mode_name(cfg_.mode);
  c.env_steps = env_steps;
  c.q1 = online_.q1;
  c.q2 = online_.q2;
  return c;
}

EpisodeStats collect_episode(const env::WorldConfig& world, const QNets& online, PolicyMode mode,
                             double alpha, double epsilon, const SeededStream& episode_stream,
                             ReplayBuffer& buffer) {
  auto [state, obs] = env::reset(world, episode_stream.derive(kEnvironment));
  SeededStream policy = episode_stream.derive(kPolicy);
  const auto n = static_cast<std::size_t>(world.n_agents);

  EpisodeStats stats;
  std::vector<int> actions(n);
  std::vector<const encoding::FeatureSet*> sets(n);
  while (!state.done) {
    for (std::size_t i = 0; i < n; ++i) sets[i] = &obs.per_agent_features[i];
    const auto batch = valuenet::make_batch<float>(sets);
    const Matrix<float> q1 = valuenet::forward_batch(online.q1, batch);
    const Matrix<float> q2 = valuenet::forward_batch(online.q2, batch);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      actions[i] = select_action_from_values(row_values(q1, row), row_values(q2, row), alpha,
                                             epsilon, mode, policy);
    }

    env::StepResult next = env::step(state, actions, world);
    for (std::size_t i = 0; i < n; ++i) {
      buffer.push({obs.per_agent_features[i], actions[i], next.reward,
                   next.per_agent_features[i], next.done});
      ++stats.transitions;
    }
    stats.episode_return += next.reward;
    ++stats.steps;
    obs = std::move(next);
  }
  return stats;
}

TrainResult train(const env::WorldConfig& world_base, const valuenet::NetConfig& net,
                  const TrainConfig& cfg, std::uint64_t seed, const EpisodeCallback& on_episode) {
  cfg.validate();
  world_base.validate();
  const SeededStream root(seed);
  SoftDoubleQLearner learner(net, cfg, root);
  ReplayBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity));
  SeededStream task_stream = root.derive(kTaskSampling);
  SeededStream replay_stream = root.derive(kReplay);

  TrainResult result;
  result.checkpoints.push_back(learner.checkpoint(0));

  std::int64_t env_steps = 0;
  std::int64_t episode = 0;
  std::int64_t next_checkpoint = cfg.eval_interval;
  std::int64_t pending_updates = 0;
  std::vector<const Transition*> batch(static_cast<std::size_t>(cfg.batch_size));

  while (env_steps < cfg.total_env_steps) {
    const auto [n, m] = sample_task(cfg, task_stream);
    env::WorldConfig world = env::config_for_task(world_base, n, m);
    if (!cfg.density_scaled_map) world.map_side = world_base.map_side;
    const double alpha = cfg.alpha.at(env_steps);
    const double epsilon = cfg.epsilon.at(env_steps);

    const EpisodeStats ep = collect_episode(world, learner.online(), cfg.mode, alpha, epsilon,
                                            root.derive(kEpisode, static_cast<std::uint64_t>(episode)),
                                            buffer);
    env_steps += ep.steps;

    CurveRow row;
    row.env_steps = env_steps;
    row.episode = episode;
    row.n = n;
    row.m = m;
    row.online_return = ep.episode_return;
    row.alpha = alpha;
    row.epsilon = epsilon;

    if (env_steps >= cfg.warmup_steps &&
        buffer.size() >= static_cast<std::size_t>(cfg.batch_size)) {
      pending_updates += ep.steps;
      const std::int64_t n_updates = pending_updates / cfg.steps_per_update;
      pending_updates -= n_updates * cfg.steps_per_update;
      double loss_sum = 0.0;
      for (std::int64_t u = 0; u < n_updates; ++u) {
        const auto idx = buffer.sample_indices(batch.size(), replay_stream);
        for (std::size_t b = 0; b < idx.size(); ++b) batch[b] = &buffer.at(idx[b]);
        loss_sum += learner.update_step(batch, cfg.alpha.at(env_steps)).loss;
      }
      if (n_updates > 0) {
        row.loss = loss_sum / static_cast<double>(n_updates);
        row.has_loss = true;
      }
    }

    result.curve.push_back(row);
    if (on_episode) on_episode(row);

    while (env_steps >= next_checkpoint) {
      result.checkpoints.push_back(learner.checkpoint(env_steps));
      next_checkpoint += cfg.eval_interval;
    }
    ++episode;
  }

  if (result.checkpoints.back().env_steps != env_steps) {
    result.checkpoints.push_back(learner.checkpoint(env_steps));
  }
  return result;
}

void write_curve_csv(std::ostream& os, std::span<const CurveRow> rows) {
  os << "env_steps,episode,n,m,online_return,loss,alpha,epsilon\n";
  const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : rows) {
    os << r.env_steps << ',' << r.episode << ',' << r.n << ',' << r.m << ',' << r.online_return
       << ',';
    if (r.has_loss) os << r.loss;
    os << ',' << r.alpha << ',' << r.epsilon << '\n';
  }
  os.precision(old_precision);
}

}  // namespace swarmtrack::trainer
