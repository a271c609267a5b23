#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "swarmtrack/belief.hpp"
#include "swarmtrack/core.hpp"

namespace swarmtrack::encoding {

inline constexpr int kFeatureDim = 6;

/// Per-target observation in the agent's body frame.
struct TargetFeature {
  double r{0.0};
  double theta{0.0};
  double r_dot{0.0};
  double theta_dot{0.0};
  double logdet_cov{0.0};
  double observed{0.0};

  friend bool operator==(const TargetFeature&, const TargetFeature&) = default;
};

/// Variable-size set of target features with the originating target index of each.
struct FeatureSet {
  std::vector<TargetFeature> features;
  std::vector<int> target_ids;

  [[nodiscard]] std::size_t size() const { return features.size(); }
  [[nodiscard]] bool empty() const { return features.empty(); }

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

TargetFeature encode_target(const Pose2& agent, const Eigen::Vector2d& agent_velocity,
                            const belief::GaussianBelief& belief, bool observed);

/// Same as above with the belief's log-determinant supplied by the caller, so a
/// step can share one factorization per target across all agents.
TargetFeature encode_target(const Pose2& agent, const Eigen::Vector2d& agent_velocity,
                            const belief::Vec4& mean, double logdet_cov, bool observed);

/// One feature per target, target_ids = 0..m-1. `observed` holds m flags.
FeatureSet encode_observation(const Pose2& agent, const Eigen::Vector2d& agent_velocity,
                              std::span<const belief::GaussianBelief> beliefs,
                              std::span<const double> logdets,
                              std::span<const unsigned char> observed);

/// Keeps the min(k, |fs|) features with the smallest range; ties go to the
/// lower target id. Survivors keep their original relative order.
FeatureSet mask_k_nearest(const FeatureSet& fs, int k);

}  // namespace swarmtrack::encoding
