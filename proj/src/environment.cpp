#include "swarmtrack/environment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "swarmtrack/errors.hpp"

namespace swarmtrack::env {

namespace {

enum StreamTag : std::uint64_t {
  kAgentPlacement = 1,
  kTargetPlacement = 2,
  kBeliefInit = 3,
  kTargetMotion = 4,
  kMeasurement = 5,
};

constexpr int kMaxPlacementAttempts = 10000;
constexpr double kMinAgentSpacing = 1.0;

double clamp_to_map(double v, double side) { return std::clamp(v, 0.0, side); }

// Reflect one coordinate about the walls; returns true when a wall was hit.
bool reflect(double& pos, double& vel, double side) {
  bool hit = false;
  if (pos < 0.0) {
    pos = -pos;
    vel = -vel;
    hit = true;
  } else if (pos > side) {
    pos = 2.0 * side - pos;
    vel = -vel;
    hit = true;
  }
  // a step longer than the map could still overshoot after one reflection
  pos = clamp_to_map(pos, side);
  return hit;
}

}  // namespace

belief::Mat2 FilterParams::measurement_noise() const {
  belief::Mat2 R = belief::Mat2::Zero();
  R(0, 0) = sigma_range * sigma_range;
  R(1, 1) = sigma_bearing * sigma_bearing;
  return R;
}

belief::Mat4 FilterParams::initial_cov() const {
  return belief::Vec4(initial_cov_diag[0], initial_cov_diag[1], initial_cov_diag[2],
                      initial_cov_diag[3])
      .asDiagonal();
}

void WorldConfig::validate() const {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("WorldConfig: ") + what);
  };
  require(n_agents >= 1, "n_agents must be >= 1");
  require(m_targets >= 1, "m_targets must be >= 1");
  require(map_side > 0.0, "map_side must be positive");
  require(horizon >= 1, "horizon must be >= 1");
  require(dt > 0.0, "dt must be positive");
  require(sensing_radius > 0.0, "sensing_radius must be positive");
  require(fov_half_angle > 0.0 && fov_half_angle <= kPi, "fov_half_angle must be in (0, pi]");
  require(v_max > 0.0, "v_max must be positive");
  require(target_noise >= 0.0, "target_noise must be non-negative");
  require(wall_noise_std >= 0.0, "wall_noise_std must be non-negative");
  require(filter.process_noise >= 0.0, "filter.process_noise must be non-negative");
  require(filter.sigma_range > 0.0 && filter.sigma_bearing > 0.0,
          "measurement noise must be positive");
  for (double d : filter.initial_cov_diag) require(d > 0.0, "initial covariance must be PD");
}

double map_area_for(int n_agents) {
  if (n_agents < 1) throw InvalidArgument("map_area_for: n must be >= 1");
  return 2500.0 * static_cast<double>(n_agents) / 4.0;
}

WorldConfig config_for_task(const WorldConfig& base, int n_agents, int m_targets) {
  WorldConfig cfg = base;
  cfg.n_agents = n_agents;
  cfg.m_targets = m_targets;
  cfg.map_side = std::sqrt(map_area_for(n_agents));
  return cfg;
}

std::pair<WorldState, StepResult> reset(const WorldConfig& cfg, const SeededStream& stream) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(cfg.n_agents);
  const auto m = static_cast<std::size_t>(cfg.m_targets);

  WorldState state;
  state.agents.reserve(n);
  SeededStream placement = stream.derive(kAgentPlacement);
  int attempts = 0;
  while (state.agents.size() < n) {
    if (++attempts > kMaxPlacementAttempts) {
      throw ConfigInfeasible("reset: cannot place " + std::to_string(n) + " agents in a " +
                             std::to_string(cfg.map_side) + " m map");
    }
    Pose2 p{placement.uniform(0.0, cfg.map_side), placement.uniform(0.0, cfg.map_side),
            wrap_angle(placement.uniform(-kPi, kPi))};
    const bool clear = std::all_of(state.agents.begin(), state.agents.end(), [&](const Pose2& o) {
      return std::hypot(o.x - p.x, o.y - p.y) >= kMinAgentSpacing;
    });
    if (clear) state.agents.push_back(p);
  }
  state.agent_velocities.assign(n, Eigen::Vector2d::Zero());

  state.targets.reserve(m);
  state.bank.model = belief::make_double_integrator(cfg.dt, cfg.filter.process_noise);
  state.bank.beliefs.reserve(m);
  const belief::Mat4 cov0 = cfg.filter.initial_cov();
  for (std::size_t j = 0; j < m; ++j) {
    SeededStream ts = stream.derive(kTargetPlacement, j);
    const auto anchor =
        state.agents[static_cast<std::size_t>(ts.uniform_int(0, cfg.n_agents - 1))];
    const double dist = ts.uniform(5.0, 10.0);
    const double dir = ts.uniform(-kPi, kPi);
    TargetPhase t{clamp_to_map(anchor.x + dist * std::cos(dir), cfg.map_side),
                  clamp_to_map(anchor.y + dist * std::sin(dir), cfg.map_side), 0.0, 0.0};
    state.targets.push_back(t);

    SeededStream bs = stream.derive(kBeliefInit, j);
    state.bank.beliefs.push_back(belief::init_belief(t, bs, cov0));
    state.target_motion_streams.push_back(stream.derive(kTargetMotion, j));
    state.measurement_streams.push_back(stream.derive(kMeasurement, j));
  }

  state.observed.assign(n * m, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      state.observed[i * m + j] =
          in_fov(state.agents[i], state.targets[j].px, state.targets[j].py, cfg) ? 1 : 0;
    }
  }

  StepResult first;
  first.per_agent_features = build_features(state);
  first.reward = 0.0;
  first.done = false;
  return {std::move(state), std::move(first)};
}

TargetPhase target_step(const TargetPhase& t, const WorldConfig& cfg, SeededStream& stream) {
  // Per-axis Cholesky factor of the 2x2 (position, velocity) block of W.
  const double dt = cfg.dt;
  const double q = cfg.target_noise;
  const double a = q * dt * dt * dt / 3.0;
  const double b = q * dt * dt / 2.0;
  const double c = q * dt;
  double l11 = 0.0, l21 = 0.0, l22 = 0.0;
  if (a > 0.0) {
    l11 = std::sqrt(a);
    l21 = b / l11;
    l22 = std::sqrt(std::max(0.0, c - l21 * l21));
  }

  TargetPhase next = t;
  const double zx1 = stream.normal(), zx2 = stream.normal();
  const double zy1 = stream.normal(), zy2 = stream.normal();
  next.px = t.px + dt * t.vx + l11 * zx1;
  next.vx = t.vx + l21 * zx1 + l22 * zx2;
  next.py = t.py + dt * t.vy + l11 * zy1;
  next.vy = t.vy + l21 * zy1 + l22 * zy2;

  const bool hit_x = reflect(next.px, next.vx, cfg.map_side);
  const bool hit_y = reflect(next.py, next.vy, cfg.map_side);
  if (hit_x || hit_y) {
    next.vx += cfg.wall_noise_std * stream.normal();
    next.vy += cfg.wall_noise_std * stream.normal();
  }

  const double speed = next.speed();
  if (speed > cfg.v_max) {
    const double scale = cfg.v_max / speed;
    next.vx *= scale;
    next.vy *= scale;
  }
  return next;
}

bool in_fov(const Pose2& agent, double px, double py, const WorldConfig& cfg) {
  const Polar p = global_to_local_polar(agent, px, py);
  return p.range <= cfg.sensing_radius && std::abs(p.bearing) <= cfg.fov_half_angle;
}

std::vector<unsigned char> sense_and_update(WorldState& state, const WorldConfig& cfg) {
  const std::size_t n = state.agents.size();
  const std::size_t m = state.targets.size();
  const belief::Mat2 R = cfg.filter.measurement_noise();
  std::vector<unsigned char> observed(n * m, 0);

  for (std::size_t i = 0; i < n; ++i) {
    const Pose2& agent = state.agents[i];
    for (std::size_t j = 0; j < m; ++j) {
      const TargetPhase& t = state.targets[j];
      if (!in_fov(agent, t.px, t.py, cfg)) continue;
      observed[i * m + j] = 1;

      SeededStream& noise = state.measurement_streams[j];
      const Polar truth = global_to_local_polar(agent, t.px, t.py);
      belief::RangeBearingMeasurement z;
      z.range = std::max(0.0, truth.range + cfg.filter.sigma_range * noise.normal());
      z.bearing = wrap_angle(truth.bearing + cfg.filter.sigma_bearing * noise.normal());
      z.source_pose = agent;
      try {
        state.bank.beliefs[j] = belief::ekf_update(state.bank.beliefs[j], z, R);
      } catch (const DegenerateGeometry&) {
        ++state.skipped_updates;
      }
    }
  }
  state.observed = observed;
  return observed;
}

double reward(const belief::FilterBank& bank) {
  if (bank.beliefs.empty()) throw InvalidArgument("reward: empty filter bank");
  double sum = 0.0;
  for (const auto& b : bank.beliefs) sum += belief::logdet(b);
  return -sum / static_cast<double>(bank.beliefs.size());
}

std::vector<encoding::FeatureSet> build_features(const WorldState& state) {
  const std::size_t n = state.agents.size();
  const std::size_t m = state.targets.size();
  std::vector<belief::GaussianBelief> ahead;
  std::vector<double> logdets;
  ahead.reserve(m);
  logdets.reserve(m);
  for (const auto& b : state.bank.beliefs) {
    ahead.push_back(belief::predict(b, state.bank.model));
    logdets.push_back(belief::logdet(ahead.back()));
  }
  std::vector<encoding::FeatureSet> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(encoding::encode_observation(
        state.agents[i], state.agent_velocities[i], ahead, logdets,
        std::span<const unsigned char>(state.observed).subspan(i * m, m)));
  }
  return out;
}

StepResult step(WorldState& state, std::span<const int> actions, const WorldConfig& cfg) {
  if (state.done) throw InvalidArgument("step: episode already finished");
  if (actions.size() != state.agents.size()) {
    throw InvalidArgument("step: expected " + std::to_string(state.agents.size()) +
                          " actions, got " + std::to_string(actions.size()));
  }

  for (std::size_t i = 0; i < state.agents.size(); ++i) {
    const ActionPrimitive a = action_from_index(actions[i]);
    const Pose2 before = state.agents[i];
    Pose2 after = step_unicycle(before, a, cfg.dt);
    after.x = clamp_to_map(after.x, cfg.map_side);
    after.y = clamp_to_map(after.y, cfg.map_side);
    state.agents[i] = after;
    state.agent_velocities[i] = {a.linear_speed * std::cos(before.heading),
                                 a.linear_speed * std::sin(before.heading)};
  }

  for (std::size_t j = 0; j < state.targets.size(); ++j) {
    state.targets[j] = target_step(state.targets[j], cfg, state.target_motion_streams[j]);
  }

  for (auto& b : state.bank.beliefs) b = belief::predict(b, state.bank.model);

  sense_and_update(state, cfg);

  StepResult result;
  result.reward = reward(state.bank);
  result.per_agent_features = build_features(state);
  ++state.step;
  state.done = state.step >= cfg.horizon;
  result.done = state.done;
  return result;
}

}  // namespace swarmtrack::env
