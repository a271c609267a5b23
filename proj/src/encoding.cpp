#include "swarmtrack/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "swarmtrack/errors.hpp"

namespace swarmtrack::encoding {

TargetFeature encode_target(const Pose2& agent, const Eigen::Vector2d& agent_velocity,
                            const belief::GaussianBelief& belief, bool observed) {
  return encode_target(agent, agent_velocity, belief.mean, belief::logdet(belief), observed);
}

TargetFeature encode_target(const Pose2& agent, const Eigen::Vector2d& agent_velocity,
                            const belief::Vec4& mean, double logdet_cov, bool observed) {
  const Polar polar = global_to_local_polar(agent, mean(0), mean(1));

  // rotate world-frame relative quantities into the body frame
  const double c = std::cos(agent.heading);
  const double s = std::sin(agent.heading);
  const double wx = mean(0) - agent.x;
  const double wy = mean(1) - agent.y;
  const double wvx = mean(2) - agent_velocity(0);
  const double wvy = mean(3) - agent_velocity(1);
  const double px = c * wx + s * wy;
  const double py = -s * wx + c * wy;
  const double vx = c * wvx + s * wvy;
  const double vy = -s * wvx + c * wvy;

  TargetFeature f;
  f.r = polar.range;
  f.theta = polar.bearing;
  if (polar.range >= 1e-6) {
    f.r_dot = (px * vx + py * vy) / polar.range;
    f.theta_dot = (px * vy - py * vx) / (polar.range * polar.range);
  }
  f.logdet_cov = logdet_cov;
  f.observed = observed ? 1.0 : 0.0;
  return f;
}

FeatureSet encode_observation(const Pose2& agent, const Eigen::Vector2d& agent_velocity,
                              std::span<const belief::GaussianBelief> beliefs,
                              std::span<const double> logdets,
                              std::span<const unsigned char> observed) {
  if (beliefs.empty()) throw InvalidArgument("encode_observation: no targets");
  if (logdets.size() != beliefs.size() || observed.size() != beliefs.size()) {
    throw InvalidArgument("encode_observation: size mismatch");
  }
  FeatureSet fs;
  fs.features.reserve(beliefs.size());
  fs.target_ids.reserve(beliefs.size());
  for (std::size_t j = 0; j < beliefs.size(); ++j) {
    fs.features.push_back(
        encode_target(agent, agent_velocity, beliefs[j].mean, logdets[j], observed[j] != 0));
    fs.target_ids.push_back(static_cast<int>(j));
  }
  return fs;
}

FeatureSet mask_k_nearest(const FeatureSet& fs, int k) {
  if (k < 1) throw InvalidArgument("mask_k_nearest: k must be >= 1");
  const std::size_t keep = std::min(static_cast<std::size_t>(k), fs.size());
  if (keep == fs.size()) return fs;

  std::vector<std::size_t> order(fs.size());
  std::iota(order.begin(), order.end(), 0);
  const auto closer = [&](std::size_t a, std::size_t b) {
    if (fs.features[a].r != fs.features[b].r) return fs.features[a].r < fs.features[b].r;
    return fs.target_ids[a] < fs.target_ids[b];
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep - 1),
                   order.end(), closer);
  order.resize(keep);
  std::sort(order.begin(), order.end());

  FeatureSet out;
  out.features.reserve(keep);
  out.target_ids.reserve(keep);
  for (std::size_t idx : order) {
    out.features.push_back(fs.features[idx]);
    out.target_ids.push_back(fs.target_ids[idx]);
  }
  return out;
}

}  // namespace swarmtrack::encoding
