#pragma once

#include <Eigen/Core>
#include <vector>

#include "swarmtrack/core.hpp"

namespace swarmtrack::belief {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
using Mat2 = Eigen::Matrix2d;

/// Gaussian over [px, py, vx, vy].
struct GaussianBelief {
  Vec4 mean{Vec4::Zero()};
  Mat4 cov{Mat4::Identity()};
};

/// Constant-velocity model with white-noise acceleration.
struct MotionModel {
  Mat4 transition{Mat4::Identity()};
  Mat4 process_noise{Mat4::Zero()};
};

struct RangeBearingMeasurement {
  double range{0.0};
  double bearing{0.0};
  Pose2 source_pose{};
};

/// Centrally stored filter bank, one belief per target.
struct FilterBank {
  std::vector<GaussianBelief> beliefs;
  MotionModel model;
};

/// A = [[I, dt I], [0, I]]; W = q [[dt^3/3 I, dt^2/2 I], [dt^2/2 I, dt I]].
MotionModel make_double_integrator(double dt, double q);

/// mean' = A mean, cov' = A cov A^T + W, symmetrized.
GaussianBelief predict(const GaussianBelief& b, const MotionModel& model);

/// Noise-free measurement of a belief mean (or any state) from `source`.
Eigen::Vector2d measure(const Pose2& source, const Vec4& state);

/// Extended Kalman correction with a range-bearing measurement, Joseph form.
/// Throws DegenerateGeometry when the predicted mean sits on the source pose.
GaussianBelief ekf_update(const GaussianBelief& b, const RangeBearingMeasurement& z,
                          const Mat2& measurement_noise);

/// log det of a symmetric positive definite matrix via Cholesky.
/// Throws NumericDomainError when the factorization fails.
double logdet(const Mat4& cov);
inline double logdet(const GaussianBelief& b) { return logdet(b.cov); }

/// Mean position offset from the truth by a uniform length in [0, max_offset]
/// along a uniform direction, zero mean velocity, covariance `initial_cov`.
GaussianBelief init_belief(const TargetPhase& target, SeededStream& stream,
                           const Mat4& initial_cov, double max_offset = 5.0);

/// Symmetric within tolerance and all eigenvalues strictly positive.
bool is_valid_covariance(const Mat4& cov, double symmetry_tol = 1e-9);

}  // namespace swarmtrack::belief
