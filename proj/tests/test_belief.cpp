#include <doctest.h>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cmath>

#include "swarmtrack/belief.hpp"
#include "swarmtrack/errors.hpp"

using namespace swarmtrack;
using namespace swarmtrack::belief;

namespace {

// Laplace expansion along the first row.
double cofactor_det(const Eigen::MatrixXd& m) {
  const auto n = m.rows();
  if (n == 1) return m(0, 0);
  double det = 0.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::MatrixXd minor(n - 1, n - 1);
    for (Eigen::Index i = 1; i < n; ++i) {
      for (Eigen::Index j = 0, k = 0; j < n; ++j) {
        if (j != c) minor(i - 1, k++) = m(i, j);
      }
    }
    det += ((c % 2 == 0) ? 1.0 : -1.0) * m(0, c) * cofactor_det(minor);
  }
  return det;
}

Mat4 random_pd(SeededStream& s, double jitter = 0.1) {
  Mat4 a;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) a(i, j) = s.uniform(-1.0, 1.0);
  }
  return a * a.transpose() + jitter * Mat4::Identity();
}

}  // namespace

TEST_CASE("double integrator blocks") {
  const MotionModel m = make_double_integrator(0.5, 0.01);
  CHECK(m.transition(0, 2) == 0.5);
  CHECK(m.transition(0, 0) == 1.0);
  CHECK(m.transition(2, 0) == 0.0);
  CHECK(m.transition.determinant() == doctest::Approx(1.0));
  CHECK(m.process_noise(0, 0) == doctest::Approx(0.01 * 0.125 / 3.0));
  CHECK(m.process_noise(0, 2) == doctest::Approx(0.01 * 0.125));
  CHECK(m.process_noise(2, 2) == doctest::Approx(0.005));
  CHECK(make_double_integrator(0.5, 0.0).process_noise.isZero());
  CHECK_THROWS_AS(make_double_integrator(0.0, 0.01), InvalidArgument);
}

TEST_CASE("predict") {
  const MotionModel noiseless = make_double_integrator(0.5, 0.0);
  GaussianBelief b;
  const GaussianBelief p = predict(b, noiseless);
  const Mat4& A = noiseless.transition;
  CHECK((p.cov - A * A.transpose()).norm() < 1e-14);
  CHECK(logdet(p.cov) == doctest::Approx(0.0).epsilon(1e-12));

  b.mean << 1, 0, 2, 0;
  const Vec4 expected(2, 0, 2, 0);
  CHECK((predict(b, noiseless).mean - expected).norm() < 1e-14);
}

TEST_CASE("predict never shrinks the determinant (Minkowski oracle)") {
  // det(A + B)^(1/n) >= det(A)^(1/n) + det(B)^(1/n) for PSD A, B.
  SeededStream s(21);
  const MotionModel model = make_double_integrator(0.5, 0.01);
  for (int trial = 0; trial < 2000; ++trial) {
    GaussianBelief b;
    b.cov = random_pd(s, 0.01);
    const Mat4 propagated = model.transition * b.cov * model.transition.transpose();
    const double lhs = std::pow(cofactor_det(predict(b, model).cov), 0.25);
    const double rhs = std::pow(cofactor_det(propagated), 0.25) +
                       std::pow(std::max(cofactor_det(model.process_noise), 0.0), 0.25);
    CHECK(lhs >= rhs * (1.0 - 1e-9));
    CHECK(logdet(predict(b, model).cov) >= logdet(b.cov) - 1e-12);
  }
}

TEST_CASE("logdet") {
  CHECK(logdet(Mat4::Identity()) == 0.0);
  CHECK(logdet(Mat4(std::exp(1.0) * Mat4::Identity())) == doctest::Approx(4.0).epsilon(1e-14));
  SeededStream s(4);
  for (int i = 0; i < 500; ++i) {
    const Mat4 c = random_pd(s);
    const double oracle = std::log(cofactor_det(c));
    CHECK(std::abs(logdet(c) - oracle) <= 1e-9 * std::max(1.0, std::abs(oracle)));
  }
  Mat4 bad = Mat4::Identity();
  bad(3, 3) = -1.0;
  CHECK_THROWS_AS(logdet(bad), NumericDomainError);
}

TEST_CASE("range-bearing measurement") {
  const Vec4 state(3, 4, 0, 0);
  const Eigen::Vector2d z = measure({0, 0, 0}, state);
  CHECK(z(0) == doctest::Approx(5.0));
  CHECK(z(1) == doctest::Approx(std::atan2(4.0, 3.0)));
}

TEST_CASE("EKF update matches a hand-computed case") {
  GaussianBelief b;
  b.mean << 4, 3, 0.5, -0.2;
  b.cov << 2, 0.3, 0.1, 0, 0.3, 1.5, 0, 0.2, 0.1, 0, 1, 0.05, 0, 0.2, 0.05, 0.8;
  const RangeBearingMeasurement z{5.2, 0.62, {1.0, -1.0, 0.3}};
  Mat2 R = Mat2::Zero();
  R(0, 0) = 0.04;
  R(1, 1) = 0.0004;
  const GaussianBelief post = ekf_update(b, z, R);

  const Vec4 mean_expected(4.146778782711284, 3.1349586068108524, 0.5061745907911914,
                           -0.1844753554083629);
  Mat4 cov_expected;
  cov_expected << 2.0501711596063288e-02, 1.4048459563543170e-02, 9.1195977749250479e-04,
      1.5083440308087471e-03, 1.4048459563542948e-02, 2.8606386392811212e-02,
      4.2923620025673773e-04, 3.6424903722721280e-03, 9.1195977749251866e-04,
      4.2923620025673952e-04, 9.9488794394522895e-01, 5.2102053915275996e-02,
      1.5083440308086991e-03, 3.6424903722721280e-03, 5.2102053915275996e-02,
      7.7297817715019257e-01;
  CHECK((post.mean - mean_expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((post.cov - cov_expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(logdet(post.cov) == doctest::Approx(-8.118434212694723).epsilon(1e-10));
  CHECK(is_valid_covariance(post.cov));
}

TEST_CASE("EKF reduces to the scalar Kalman filter along the range axis") {
  // Target straight ahead on x; diagonal prior decouples the range coordinate.
  GaussianBelief b;
  b.mean << 10, 0, 0, 0;
  b.cov = Vec4(0.5, 2.0, 1.0, 1.0).asDiagonal();
  Mat2 R = Mat2::Zero();
  R(0, 0) = 0.04;
  R(1, 1) = 0.0004;
  const GaussianBelief post = ekf_update(b, {10.3, 0.0, {0, 0, 0}}, R);
  const double gain = 0.5 / (0.5 + 0.04);
  CHECK(post.mean(0) == doctest::Approx(10.0 + gain * 0.3).epsilon(1e-12));
  CHECK(post.cov(0, 0) == doctest::Approx((1 - gain) * 0.5).epsilon(1e-12));
  // bearing row: H = 1/r on y, variance 2
  const double hy = 1.0 / 10.0;
  const double py = 2.0 - 2.0 * hy * hy * 2.0 / (hy * hy * 2.0 + 0.0004);
  CHECK(post.cov(1, 1) == doctest::Approx(py).epsilon(1e-10));
}

TEST_CASE("EKF never increases logdet and keeps the covariance valid") {
  SeededStream s(99);
  Mat2 R = Mat2::Zero();
  R(0, 0) = 0.04;
  R(1, 1) = 0.0004;
  for (int i = 0; i < 2000; ++i) {
    GaussianBelief b;
    b.mean << s.uniform(-20, 20), s.uniform(-20, 20), s.uniform(-2, 2), s.uniform(-2, 2);
    b.cov = random_pd(s, 0.01);
    const Pose2 pose{s.uniform(-20, 20), s.uniform(-20, 20), s.uniform(-kPi, kPi)};
    if (std::hypot(b.mean(0) - pose.x, b.mean(1) - pose.y) < 0.1) continue;
    const Eigen::Vector2d z = measure(pose, b.mean);
    const GaussianBelief post =
        ekf_update(b, {z(0) + s.normal() * 0.2, z(1) + s.normal() * 0.02, pose}, R);
    CHECK(logdet(post.cov) <= logdet(b.cov) + 1e-9);
    CHECK(is_valid_covariance(post.cov));
  }
}

TEST_CASE("EKF with a coincident mean is degenerate") {
  GaussianBelief b;
  b.mean << 1, 1, 0, 0;
  CHECK_THROWS_AS(ekf_update(b, {0.0, 0.0, {1, 1, 0}}, Mat2::Identity()), DegenerateGeometry);
}

TEST_CASE("init_belief offsets and zero velocity") {
  SeededStream s(8);
  const Mat4 cov = Vec4(2, 2, 1, 1).asDiagonal();
  const TargetPhase t{10.0, -3.0, 1.0, 0.5};
  for (int i = 0; i < 1000; ++i) {
    const GaussianBelief b = init_belief(t, s, cov);
    const double off = std::hypot(b.mean(0) - t.px, b.mean(1) - t.py);
    CHECK(off >= 0.0);
    CHECK(off <= 5.0);
    CHECK(b.mean(2) == 0.0);
    CHECK(b.mean(3) == 0.0);
    CHECK(b.cov == cov);
  }
  SeededStream a(3), c(3);
  CHECK(init_belief(t, a, cov).mean == init_belief(t, c, cov).mean);
}

TEST_CASE("covariance validity") {
  CHECK(is_valid_covariance(Mat4::Identity()));
  Mat4 asym = Mat4::Identity();
  asym(0, 1) = 0.1;
  CHECK_FALSE(is_valid_covariance(asym));
  CHECK_FALSE(is_valid_covariance(Mat4::Zero()));
}
