#include "swarmtrack/belief.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <cmath>

#include "swarmtrack/errors.hpp"

namespace swarmtrack::belief {

namespace {

Mat4 symmetrize(const Mat4& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

MotionModel make_double_integrator(double dt, double q) {
  if (!(dt > 0.0)) throw InvalidArgument("make_double_integrator: dt must be positive");
  if (!(q >= 0.0)) throw InvalidArgument("make_double_integrator: q must be non-negative");
  MotionModel m;
  m.transition.setIdentity();
  m.transition(0, 2) = dt;
  m.transition(1, 3) = dt;

  const double a = q * dt * dt * dt / 3.0;
  const double b = q * dt * dt / 2.0;
  const double c = q * dt;
  m.process_noise.setZero();
  m.process_noise(0, 0) = m.process_noise(1, 1) = a;
  m.process_noise(0, 2) = m.process_noise(2, 0) = b;
  m.process_noise(1, 3) = m.process_noise(3, 1) = b;
  m.process_noise(2, 2) = m.process_noise(3, 3) = c;
  return m;
}

GaussianBelief predict(const GaussianBelief& b, const MotionModel& model) {
  const Mat4& A = model.transition;
  GaussianBelief out;
  out.mean = A * b.mean;
  out.cov = symmetrize(A * b.cov * A.transpose() + model.process_noise);
  return out;
}

Eigen::Vector2d measure(const Pose2& source, const Vec4& state) {
  const Polar p = global_to_local_polar(source, state(0), state(1));
  return {p.range, p.bearing};
}

GaussianBelief ekf_update(const GaussianBelief& b, const RangeBearingMeasurement& z,
                          const Mat2& measurement_noise) {
  const double dx = b.mean(0) - z.source_pose.x;
  const double dy = b.mean(1) - z.source_pose.y;
  const double r2 = dx * dx + dy * dy;
  const double r = std::sqrt(r2);
  if (r <= 1e-6) {
    throw DegenerateGeometry("ekf_update: predicted mean coincides with the sensor");
  }

  Eigen::Matrix<double, 2, 4> H = Eigen::Matrix<double, 2, 4>::Zero();
  H(0, 0) = dx / r;
  H(0, 1) = dy / r;
  H(1, 0) = -dy / r2;
  H(1, 1) = dx / r2;

  Eigen::Vector2d innovation;
  innovation(0) = z.range - r;
  innovation(1) = wrap_angle(z.bearing - wrap_angle(std::atan2(dy, dx) - z.source_pose.heading));

  const Mat2 S = H * b.cov * H.transpose() + measurement_noise;
  const Eigen::Matrix<double, 4, 2> K = b.cov * H.transpose() * S.inverse();

  GaussianBelief out;
  out.mean = b.mean + K * innovation;
  const Mat4 I_KH = Mat4::Identity() - K * H;
  out.cov = symmetrize(I_KH * b.cov * I_KH.transpose() + K * measurement_noise * K.transpose());
  return out;
}

double logdet(const Mat4& cov) {
  Eigen::LLT<Mat4> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericDomainError("logdet: covariance is not positive definite");
  }
  const Mat4 L = llt.matrixL();
  double sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (!(L(i, i) > 0.0)) throw NumericDomainError("logdet: singular factor");
    sum += 2.0 * std::log(L(i, i));
  }
  return sum;
}

GaussianBelief init_belief(const TargetPhase& target, SeededStream& stream,
                           const Mat4& initial_cov, double max_offset) {
  const double length = stream.uniform(0.0, max_offset);
  const double angle = stream.uniform(-kPi, kPi);
  GaussianBelief b;
  b.mean << target.px + length * std::cos(angle), target.py + length * std::sin(angle), 0.0, 0.0;
  b.cov = initial_cov;
  return b;
}

bool is_valid_covariance(const Mat4& cov, double symmetry_tol) {
  if (!cov.allFinite()) return false;
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > symmetry_tol) return false;
  Eigen::SelfAdjointEigenSolver<Mat4> es(cov, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() > 0.0;
}

}  // namespace swarmtrack::belief
