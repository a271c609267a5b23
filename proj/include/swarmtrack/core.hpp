#pragma once

#include <array>
#include <cstdint>
#include <numbers>
#include <utility>

namespace swarmtrack {

inline constexpr double kPi = std::numbers::pi;

/// Pursuer pose in SE(2). heading is kept in (-pi, pi].
struct Pose2 {
  double x{0.0};
  double y{0.0};
  double heading{0.0};

  friend bool operator==(const Pose2&, const Pose2&) = default;
};

/// Target position and velocity in the world frame.
struct TargetPhase {
  double px{0.0};
  double py{0.0};
  double vx{0.0};
  double vy{0.0};

  [[nodiscard]] double speed() const;

  friend bool operator==(const TargetPhase&, const TargetPhase&) = default;
};

/// One (v, omega) motion primitive.
struct ActionPrimitive {
  double linear_speed{0.0};
  double turn_rate{0.0};

  friend bool operator==(const ActionPrimitive&, const ActionPrimitive&) = default;
};

inline constexpr std::array<double, 4> kLinearSpeeds{0.0, 0.67, 1.33, 2.0};
inline constexpr std::array<double, 3> kTurnRates{-kPi / 4.0, 0.0, kPi / 4.0};
inline constexpr int kNumActions = static_cast<int>(kLinearSpeeds.size() * kTurnRates.size());

/// Speed-major, turn-minor enumeration of the 12 primitives.
ActionPrimitive action_from_index(int index);
int index_of(const ActionPrimitive& action);

/// Wraps into (-pi, pi]. Throws InvalidArgument on non-finite input.
double wrap_angle(double angle);

/// Forward-Euler unicycle step. Requires dt > 0.
Pose2 step_unicycle(const Pose2& pose, const ActionPrimitive& action, double dt);

struct Polar {
  double range{0.0};
  double bearing{0.0};
};

/// Range and bearing of a world point in the agent's body frame. A coincident
/// point has bearing 0.
Polar global_to_local_polar(const Pose2& agent, double px, double py);

/// Counter-based deterministic generator. Substreams derived by key are
/// independent of how many values the parent has produced, so per-entity
/// streams do not depend on call order elsewhere.
class SeededStream {
 public:
  explicit SeededStream(std::uint64_t seed = 0);

  [[nodiscard]] SeededStream derive(std::uint64_t tag, std::uint64_t index = 0) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();

  [[nodiscard]] std::uint64_t key() const { return key_; }
  [[nodiscard]] std::uint64_t counter() const { return counter_; }

  friend bool operator==(const SeededStream&, const SeededStream&) = default;

 private:
  std::uint64_t key_;
  std::uint64_t counter_{0};
};

}  // namespace swarmtrack
