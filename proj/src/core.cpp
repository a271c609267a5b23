#include "swarmtrack/core.hpp"

#include <cmath>
#include <string>

#include "swarmtrack/errors.hpp"

namespace swarmtrack {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

}  // namespace

double TargetPhase::speed() const { return std::hypot(vx, vy); }

ActionPrimitive action_from_index(int index) {
  if (index < 0 || index >= kNumActions) {
    throw InvalidArgument("action index out of range: " + std::to_string(index));
  }
  const auto n_turn = static_cast<int>(kTurnRates.size());
  return {kLinearSpeeds[static_cast<std::size_t>(index / n_turn)],
          kTurnRates[static_cast<std::size_t>(index % n_turn)]};
}

int index_of(const ActionPrimitive& action) {
  for (int i = 0; i < kNumActions; ++i) {
    if (action_from_index(i) == action) return i;
  }
  throw InvalidArgument("not a motion primitive");
}

double wrap_angle(double angle) {
  if (!std::isfinite(angle)) throw InvalidArgument("wrap_angle: non-finite angle");
  double r = std::remainder(angle, 2.0 * kPi);  // in [-pi, pi]
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

Pose2 step_unicycle(const Pose2& pose, const ActionPrimitive& action, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("step_unicycle: dt must be positive");
  return {pose.x + action.linear_speed * std::cos(pose.heading) * dt,
          pose.y + action.linear_speed * std::sin(pose.heading) * dt,
          wrap_angle(pose.heading + action.turn_rate * dt)};
}

Polar global_to_local_polar(const Pose2& agent, double px, double py) {
  const double dx = px - agent.x;
  const double dy = py - agent.y;
  const double range = std::hypot(dx, dy);
  if (range == 0.0) return {0.0, 0.0};
  return {range, wrap_angle(std::atan2(dy, dx) - agent.heading)};
}

SeededStream::SeededStream(std::uint64_t seed) : key_(mix64(seed + kGolden)) {}

SeededStream SeededStream::derive(std::uint64_t tag, std::uint64_t index) const {
  SeededStream child(0);
  child.key_ = mix64(key_ ^ mix64(tag * kGolden + 0x632be59bd9b4e019ull) ^
                     mix64((index + 1) * 0xd1b54a32d192ed03ull));
  child.counter_ = 0;
  return child;
}

std::uint64_t SeededStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double SeededStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::int64_t SeededStream::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw InvalidArgument("uniform_int: empty range");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(next_u64());
  // rejection keeps the draw exactly uniform
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return lo + static_cast<std::int64_t>(v % span);
}

double SeededStream::normal() {
  // Box-Muller, one value per call keeps the stream stateless beyond the counter.
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

}  // namespace swarmtrack
