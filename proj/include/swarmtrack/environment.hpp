#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "swarmtrack/belief.hpp"
#include "swarmtrack/core.hpp"
#include "swarmtrack/encoding.hpp"

namespace swarmtrack::env {

/// Kalman filter parameters used by the agents' shared filter bank.
struct FilterParams {
  double process_noise{0.01};  // q, m^2/s^3
  double sigma_range{0.2};     // m
  double sigma_bearing{0.02};  // rad
  std::array<double, 4> initial_cov_diag{2.0, 2.0, 1.0, 1.0};

  [[nodiscard]] belief::Mat2 measurement_noise() const;
  [[nodiscard]] belief::Mat4 initial_cov() const;
};

struct WorldConfig {
  int n_agents{4};
  int m_targets{4};
  double map_side{50.0};
  int horizon{200};
  double dt{0.5};
  double sensing_radius{10.0};
  double fov_half_angle{kPi / 4.0};
  double v_max{2.0};
  double target_noise{0.01};   // q of the true target motion
  double wall_noise_std{0.5};  // m/s, added on wall bounces only
  FilterParams filter{};
  std::uint64_t seed{0};

  /// Throws InvalidArgument on any out-of-range field.
  void validate() const;
};

/// Square map area keeping 625 m^2 per agent (2500 m^2 for four agents).
double map_area_for(int n_agents);

/// Copy of `base` resized for n agents and m targets at constant density.
WorldConfig config_for_task(const WorldConfig& base, int n_agents, int m_targets);

struct WorldState {
  int step{0};
  std::vector<Pose2> agents;
  std::vector<Eigen::Vector2d> agent_velocities;  // commanded by the previous action
  std::vector<TargetPhase> targets;
  belief::FilterBank bank;
  bool done{false};
  /// Row-major n x m flags from the most recent sensing pass.
  std::vector<unsigned char> observed;
  /// Number of measurement updates skipped for degenerate geometry.
  int skipped_updates{0};

  std::vector<SeededStream> target_motion_streams;
  std::vector<SeededStream> measurement_streams;
};

struct StepResult {
  std::vector<encoding::FeatureSet> per_agent_features;
  double reward{0.0};
  bool done{false};
};

/// Places agents, targets and beliefs. Throws ConfigInfeasible when agents
/// cannot be spaced 1 m apart within 10,000 rejection attempts.
std::pair<WorldState, StepResult> reset(const WorldConfig& cfg, const SeededStream& stream);

/// Double-integrator move with N(0, W) noise, wall reflection with extra
/// velocity noise, then a speed clamp to v_max.
TargetPhase target_step(const TargetPhase& target, const WorldConfig& cfg, SeededStream& stream);

bool in_fov(const Pose2& agent, double px, double py, const WorldConfig& cfg);

/// Measures every target inside an agent's field of view and applies the EKF
/// correction in ascending (agent, target) order. Returns the n x m flags.
std::vector<unsigned char> sense_and_update(WorldState& state, const WorldConfig& cfg);

/// -(1/m) sum_j logdet(cov_j)
double reward(const belief::FilterBank& bank);

/// Advances the world by one synchronized step of all agents and targets.
StepResult step(WorldState& state, std::span<const int> actions, const WorldConfig& cfg);

/// Feature sets built from the bank predicted one step ahead (the bank itself
/// is left at its corrected state).
std::vector<encoding::FeatureSet> build_features(const WorldState& state);

}  // namespace swarmtrack::env
