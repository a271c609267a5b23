#include <doctest.h>

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "support.hpp"
#include "swarmtrack/encoding.hpp"
#include "swarmtrack/errors.hpp"

using namespace swarmtrack;
using namespace swarmtrack::encoding;
using swarmtrack::testing::brute_force_mask;

namespace {

FeatureSet from_ranges(const std::vector<double>& ranges) {
  FeatureSet fs;
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    TargetFeature f;
    f.r = ranges[i];
    f.theta = 0.01 * static_cast<double>(i);
    fs.features.push_back(f);
    fs.target_ids.push_back(static_cast<int>(i));
  }
  return fs;
}

}  // namespace

TEST_CASE("encode_target basic geometry") {
  belief::GaussianBelief b;
  b.mean << 3, 4, 0, 0;
  const TargetFeature f = encode_target({0, 0, 0}, Eigen::Vector2d::Zero(), b, false);
  CHECK(f.r == doctest::Approx(5.0));
  CHECK(f.theta == doctest::Approx(std::atan2(4.0, 3.0)));
  CHECK(f.r_dot == 0.0);
  CHECK(f.theta_dot == 0.0);
  CHECK(f.logdet_cov == 0.0);
  CHECK(f.observed == 0.0);
  CHECK(encode_target({0, 0, 0}, Eigen::Vector2d::Zero(), b, true).observed == 1.0);
}

TEST_CASE("radial and tangential motion") {
  belief::GaussianBelief b;
  b.mean << 0, 5, 0, 1;  // receding along the line of sight
  const TargetFeature f = encode_target({0, 0, 1.0}, Eigen::Vector2d::Zero(), b, false);
  CHECK(f.r_dot == doctest::Approx(1.0));
  CHECK(f.theta_dot == doctest::Approx(0.0));

  b.mean << 5, 0, 0, 2;  // crossing at 2 m/s, 5 m away: 0.4 rad/s counter-clockwise
  const TargetFeature g = encode_target({0, 0, 0}, Eigen::Vector2d::Zero(), b, false);
  CHECK(g.r_dot == doctest::Approx(0.0));
  CHECK(g.theta_dot == doctest::Approx(0.4));

  // agent driving toward a static target closes the range
  b.mean << 5, 0, 0, 0;
  const TargetFeature h = encode_target({0, 0, 0}, Eigen::Vector2d(2, 0), b, false);
  CHECK(h.r_dot == doctest::Approx(-2.0));
}

TEST_CASE("coincident mean has zero derivatives") {
  belief::GaussianBelief b;
  b.mean << 1, 2, 3, -1;
  const TargetFeature f = encode_target({1, 2, 0.4}, Eigen::Vector2d(1, 1), b, true);
  CHECK(f.r == 0.0);
  CHECK(f.theta == 0.0);
  CHECK(f.r_dot == 0.0);
  CHECK(f.theta_dot == 0.0);
}

TEST_CASE("features are invariant under rigid transforms of the world") {
  SeededStream s(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const Pose2 agent{s.uniform(-10, 10), s.uniform(-10, 10), s.uniform(-kPi, kPi)};
    const Eigen::Vector2d vel(s.uniform(-2, 2), s.uniform(-2, 2));
    belief::Vec4 mean(s.uniform(-10, 10), s.uniform(-10, 10), s.uniform(-2, 2), s.uniform(-2, 2));

    const double phi = s.uniform(-kPi, kPi);
    const Eigen::Vector2d shift(s.uniform(-50, 50), s.uniform(-50, 50));
    const Eigen::Rotation2Dd rot(phi);
    const Eigen::Vector2d ap = rot * Eigen::Vector2d(agent.x, agent.y) + shift;
    const Pose2 agent2{ap.x(), ap.y(), wrap_angle(agent.heading + phi)};
    const Eigen::Vector2d mp = rot * mean.head<2>() + shift;
    const Eigen::Vector2d mv = rot * mean.tail<2>();
    belief::Vec4 mean2(mp.x(), mp.y(), mv.x(), mv.y());

    const TargetFeature a = encode_target(agent, vel, mean, 0.5, true);
    const TargetFeature b = encode_target(agent2, rot * vel, mean2, 0.5, true);
    CHECK(std::abs(a.r - b.r) < 1e-9);
    CHECK(std::abs(wrap_angle(a.theta - b.theta)) < 1e-9);
    CHECK(std::abs(a.r_dot - b.r_dot) < 1e-9);
    CHECK(std::abs(a.theta_dot - b.theta_dot) < 1e-9);
  }
}

TEST_CASE("encode_observation") {
  std::vector<belief::GaussianBelief> beliefs(3);
  beliefs[0].mean << 1, 0, 0, 0;
  beliefs[1].mean << 0, 2, 0, 0;
  beliefs[2].mean << -3, 0, 0, 0;
  const std::vector<double> logdets{0.1, 0.2, 0.3};
  const std::vector<unsigned char> obs{1, 0, 1};
  const FeatureSet fs = encode_observation({0, 0, 0}, Eigen::Vector2d::Zero(), beliefs, logdets, obs);
  CHECK(fs.size() == 3);
  CHECK(fs.target_ids == std::vector<int>{0, 1, 2});
  CHECK(fs.features[1].logdet_cov == 0.2);
  CHECK(fs.features[2].observed == 1.0);
  CHECK(fs.features[2].r == doctest::Approx(3.0));
  CHECK_THROWS_AS(encode_observation({0, 0, 0}, Eigen::Vector2d::Zero(), {}, {}, {}),
                  InvalidArgument);
}

TEST_CASE("mask_k_nearest examples") {
  const FeatureSet fs = from_ranges({5, 2, 9});
  const FeatureSet two = mask_k_nearest(fs, 2);
  CHECK(two.target_ids == std::vector<int>{0, 1});
  CHECK(two.features[0] == fs.features[0]);
  CHECK(two.features[1] == fs.features[1]);

  CHECK(mask_k_nearest(fs, 3) == fs);
  CHECK(mask_k_nearest(fs, 10) == fs);
  CHECK(mask_k_nearest(fs, 1).target_ids == std::vector<int>{1});
  CHECK(mask_k_nearest(from_ranges({3, 3}), 1).target_ids == std::vector<int>{0});
  CHECK_THROWS_AS(mask_k_nearest(fs, 0), InvalidArgument);
}

TEST_CASE("mask_k_nearest agrees with full-sort truncation") {
  SeededStream s(31);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto m = static_cast<std::size_t>(s.uniform_int(1, 20));
    std::vector<double> ranges(m);
    // coarse values so ties occur often
    for (auto& r : ranges) r = static_cast<double>(s.uniform_int(0, 6));
    FeatureSet fs = from_ranges(ranges);
    // shuffle ids so tie-breaking by id differs from position
    for (std::size_t i = m; i > 1; --i) {
      std::swap(fs.target_ids[i - 1],
                fs.target_ids[static_cast<std::size_t>(s.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    for (int k = 1; k <= static_cast<int>(m) + 1; ++k) {
      const FeatureSet got = mask_k_nearest(fs, k);
      REQUIRE(got == brute_force_mask(fs, k));
      CHECK(got.size() == std::min<std::size_t>(m, static_cast<std::size_t>(k)));
    }
  }
}
